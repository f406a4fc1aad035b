import numpy as np
import pytest

from qstbc._accel import HAS_NUMBA
from qstbc.streams import stream

BACKENDS = ["numba", "numpy"] if HAS_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng(request):
    # one independent stream per test, stable across runs
    return stream(20240601, request.node.nodeid)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
