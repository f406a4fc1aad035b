"""Rate-one quasi-orthogonal space-time block code for 2^n transmit antennas.

The transmit matrix is built recursively from the Alamouti block::

    G_2(x1, x2) = [[x1,   x2  ],
                   [x2*, -x1* ]]

    G_n(x) = [[G_{n/2}(x_a),        G_{n/2}(x_b)      ],
              [G_{n/2}(x_b) Theta, -G_{n/2}(x_a) Theta]]

with ``x_a``/``x_b`` the first and second half of ``x`` and
``Theta = diag(1, -1, 1, ...)`` of size ``n/2``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UsageError

__all__ = [
    "Constellation", "SymbolVector", "PrecodedVector", "is_power_of_two",
    "build_theta", "build_transmit_matrix", "transmit_basis", "transmit_matrices",
    "check_quasi_orthogonality", "precode", "psk_constellation",
    "interleave_halves", "split_halves",
]


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def _require_nt(n_t, minimum=2):
    if not is_power_of_two(n_t) or n_t < minimum:
        raise UsageError(
            f"n_T must be a power of two >= {minimum}, got {n_t!r}")


@dataclass(frozen=True)
class Constellation:
    """Unit-modulus PSK points with Gray labels.

    ``labels[k]`` is the Gray code of point ``k``; the bit pattern of a
    label, most significant bit first, is what BER counting compares.
    """

    order: int
    points: np.ndarray

    @property
    def bits_per_symbol(self):
        return int(self.order).bit_length() - 1

    @property
    def labels(self):
        k = np.arange(self.order)
        return k ^ (k >> 1)

    @property
    def bit_table(self):
        """``(order, bits_per_symbol)`` 0/1 array of Gray bits."""
        nb = self.bits_per_symbol
        shifts = np.arange(nb - 1, -1, -1)
        return (self.labels[:, None] >> shifts) & 1

    def nearest(self, z):
        """Index of the closest point for each entry of ``z``."""
        z = np.asarray(z)
        return np.argmin(np.abs(z[..., None] - self.points) ** 2, axis=-1)


def psk_constellation(order):
    """M-PSK with points ``exp(2 pi i k / M)``, ``k = 0..M-1``."""
    if not is_power_of_two(order) or order < 2:
        raise UsageError(f"PSK order must be a power of two >= 2, got {order!r}")
    k = np.arange(order)
    points = np.exp(2j * np.pi * k / order)
    # snap exact axis points so that e.g. QPSK is exactly {1, i, -1, -i}
    points = np.round(points.real, 15) + 1j * np.round(points.imag, 15)
    points.setflags(write=False)
    return Constellation(order=order, points=points)


@dataclass(frozen=True)
class SymbolVector:
    """Data symbols of one block, split into the two decoupled halves."""

    s_minus: np.ndarray
    s_plus: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.s_minus, dtype=complex)
        b = np.asarray(self.s_plus, dtype=complex)
        if a.shape != b.shape or a.ndim != 1:
            raise UsageError("s_minus and s_plus must be 1-D of equal length")
        object.__setattr__(self, "s_minus", a)
        object.__setattr__(self, "s_plus", b)

    @property
    def n_t(self):
        return 2 * self.s_minus.size


def interleave_halves(odd, even):
    """Merge two halves into one vector: ``odd`` at 1-based odd slots."""
    odd = np.asarray(odd)
    even = np.asarray(even)
    out = np.empty(odd.shape[:-1] + (2 * odd.shape[-1],),
                   dtype=np.result_type(odd, even, complex))
    out[..., 0::2] = odd
    out[..., 1::2] = even
    return out


def split_halves(x):
    x = np.asarray(x)
    return x[..., 0::2], x[..., 1::2]


@dataclass(frozen=True)
class PrecodedVector:
    """Antenna symbols ``x`` with odd/even (1-based) views."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=complex))

    @property
    def x_odd(self):
        return self.x[0::2]

    @property
    def x_even(self):
        return self.x[1::2]

    @property
    def n_t(self):
        return self.x.size


def build_theta(n_t):
    """``diag((-1)^(j-1))`` for ``j = 1..n_T/2``."""
    _require_nt(n_t, minimum=4)
    return np.diag((-1.0) ** np.arange(n_t // 2))


def _g(x):
    n = x.shape[0]
    if n == 2:
        return np.array([[x[0], x[1]],
                         [np.conj(x[1]), -np.conj(x[0])]])
    a = _g(x[:n // 2])
    b = _g(x[n // 2:])
    signs = (-1.0) ** np.arange(n // 2)
    return np.block([[a, b], [b * signs, -a * signs]])


def build_transmit_matrix(n_t, x):
    """The ``n_T x n_T`` transmit matrix ``G_{n_T}(x)``.

    ``x`` may be a :class:`PrecodedVector` or any length-``n_T`` vector.
    """
    _require_nt(n_t)
    x = x.x if isinstance(x, PrecodedVector) else np.asarray(x, dtype=complex)
    if x.shape != (n_t,):
        raise UsageError(f"x must have length {n_t}, got shape {x.shape}")
    return _g(x)


@lru_cache(maxsize=None)
def transmit_basis(n_t):
    """Tensors ``(A, B)`` with ``G(x) = sum_j x_j A[j] + conj(x_j) B[j]``.

    Used to build many transmit matrices at once with ``einsum``.
    """
    eye = np.eye(n_t, dtype=complex)
    g_re = np.stack([build_transmit_matrix(n_t, e) for e in eye])
    g_im = np.stack([build_transmit_matrix(n_t, 1j * e) for e in eye])
    a = 0.5 * (g_re - 1j * g_im)
    b = 0.5 * (g_re + 1j * g_im)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def transmit_matrices(x):
    """Batched :func:`build_transmit_matrix` for ``x`` of shape (..., n_T)."""
    x = np.asarray(x, dtype=complex)
    a, b = transmit_basis(x.shape[-1])
    return (np.einsum("...j,jtk->...tk", x, a)
            + np.einsum("...j,jtk->...tk", np.conj(x), b))


def check_quasi_orthogonality(n_t, x, builder=None):
    """Frobenius norm of ``G^H(xo) G(xe) + G^H(xe) G(xo)``.

    ``xo``/``xe`` keep the odd/even entries of ``x`` and zero the rest.
    ``builder`` replaces :func:`build_transmit_matrix` (used to test
    deliberately broken codes).
    """
    builder = builder or build_transmit_matrix
    x = x.x if isinstance(x, PrecodedVector) else np.asarray(x, dtype=complex)
    xo = np.kron(x[0::2], [1, 0])
    xe = np.kron(x[1::2], [0, 1])
    go = builder(n_t, xo)
    ge = builder(n_t, xe)
    lhs = go.conj().T @ ge + ge.conj().T @ go
    return float(np.linalg.norm(lhs))


def precode(s, v):
    """Rotate both symbol halves by the unitary ``v``: ``x_odd = v s^-``."""
    v = np.asarray(v, dtype=complex)
    n = s.s_minus.size
    if v.shape != (n, n):
        raise UsageError(f"precoder must be {n}x{n}, got {v.shape}")
    return PrecodedVector(interleave_halves(v @ s.s_minus, v @ s.s_plus))
