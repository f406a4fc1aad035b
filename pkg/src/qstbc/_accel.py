"""Backend selection for the numeric kernels.

Every hot kernel exists twice: a loop version compiled with ``numba.njit``
and a vectorised pure-numpy twin.  The numba path is used unless numba is
missing or the environment variable ``QSTBC_DISABLE_NUMBA`` is set to a
truthy value (``1``, ``true``, ``yes``).  Individual calls can force a path
with ``backend="numba"`` or ``backend="numpy"``.
"""

import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_FALSY = ("", "0", "false", "no", "off")

NUMBA_ENABLED = HAS_NUMBA and (
    os.environ.get("QSTBC_DISABLE_NUMBA", "0").strip().lower() in _FALSY)


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    Compilation is lazy, so decorating costs nothing when the numpy backend
    is selected.
    """
    kwargs.setdefault("cache", True)
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]
    return lambda fn: fn


def resolve(backend=None):
    """Return ``"numba"`` or ``"numpy"`` for a requested backend."""
    if backend is None:
        return "numba" if NUMBA_ENABLED else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def pick(fn, backend=None):
    """The compiled dispatcher or its plain-Python original."""
    if resolve(backend) == "numba":
        return fn
    return getattr(fn, "py_func", fn)
