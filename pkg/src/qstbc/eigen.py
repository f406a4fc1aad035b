"""Eigen-structure of the QSTBC equivalent channel.

The equivalent channel ``H~`` of one decoupled half has the recursive
structure ``M_N(alpha)``::

    M_2(a1, a2) = [[a1, i a2], [-i a2, a1]]     N_2(a3, a4) = [[i a3, a4], [-a4, i a3]]
    M_N = [[M_{N/2}(first), N_{N/2}(second)], [-N_{N/2}(second), M_{N/2}(first)]]
    N_N = [[N_{N/2}(first), M_{N/2}(second)], [-M_{N/2}(second), N_{N/2}(first)]]

Every such matrix is diagonalised by the fixed unitary ``V_N`` built here,
whatever the channel.  Its eigenvalues follow a short recursion in the
``alpha`` coefficients, and they are also the quadratic forms
``(n_T/2) * sum_i h_i^H A^j h_i`` with the rank-2 projectors ``A^j``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._accel import njit, resolve
from .codec import is_power_of_two
from .errors import DegenerateChannelError, StructuralViolation, UsageError

__all__ = [
    "EigenStructure", "ProjectorFamily", "structured_matrix",
    "build_permutation", "build_eigenvectors", "even_permutation",
    "eigenvalues_recursive", "build_projectors", "eigenvalues_quadratic",
    "noncentrality", "prewhitener", "degenerate_mask", "hermitian_eig_oracle",
    "diagonalization_residual", "eigen_structure",
]

_V2 = np.array([[1, 1], [-1j, 1j]]) / np.sqrt(2.0)


def _require_pow2(n, minimum, what="N"):
    if not is_power_of_two(n) or n < minimum:
        raise UsageError(f"{what} must be a power of two >= {minimum}, got {n!r}")


# ---------------------------------------------------------------------------
# structured matrices
# ---------------------------------------------------------------------------

def _m_block(a):
    n = a.shape[-1]
    if n == 1:
        return np.array([[a[0]]])
    if n == 2:
        return np.array([[a[0], 1j * a[1]], [-1j * a[1], a[0]]])
    top, bot = _m_block(a[:n // 2]), _n_block(a[n // 2:])
    return np.block([[top, bot], [-bot, top]])


def _n_block(b):
    n = b.shape[-1]
    if n == 2:
        return np.array([[1j * b[0], b[1]], [-b[1], 1j * b[0]]])
    top, bot = _n_block(b[:n // 2]), _m_block(b[n // 2:])
    return np.block([[top, bot], [-bot, top]])


def structured_matrix(alpha):
    """``M_N(alpha)``, the Hermitian matrix shape of ``H~``."""
    alpha = np.asarray(alpha, dtype=float)
    _require_pow2(alpha.size, 1, "len(alpha)")
    return _m_block(alpha).astype(complex)


@lru_cache(maxsize=None)
def _first_row_pattern(n):
    # first row of M_N(1, ..., 1): entries in {1, i}
    return structured_matrix(np.ones(n))[0].copy()


# ---------------------------------------------------------------------------
# constant eigenvectors
# ---------------------------------------------------------------------------

def build_permutation(n):
    """Permutation ``Pi_N`` pairing index ``k`` with ``k + N/2``.

    ``[Pi]_ij = 1`` iff ``j = 2i - 1`` (``i <= N/2``) or
    ``j = 2(i - N/2)`` (``i > N/2``), 1-based.  Conjugating by it turns a
    2x2 block matrix of diagonal blocks into a block-diagonal matrix of
    2x2 blocks.
    """
    _require_pow2(n, 2)
    p = np.zeros((n, n))
    half = n // 2
    rows = np.arange(n)
    cols = np.where(rows < half, 2 * rows, 2 * (rows - half) + 1)
    p[rows, cols] = 1.0
    return p


@lru_cache(maxsize=None)
def _eigenvectors(n):
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    if n == 2:
        return _V2.copy()
    inner = np.kron(np.eye(2), _eigenvectors(n // 2))
    return inner @ build_permutation(n) @ np.kron(np.eye(n // 2), _V2)


def build_eigenvectors(n):
    """Unitary ``V_N = (I_2 (x) V_{N/2}) Pi_N (I_{N/2} (x) V_2)``.

    ``N = 1`` (the Alamouti case) gives the trivial ``[[1]]``.
    """
    _require_pow2(n, 1)
    return _eigenvectors(n).copy()


@lru_cache(maxsize=None)
def even_permutation(n):
    """Permutation ``Q = V_N^T V_N``.

    ``conj(V) = V Q``, so the even half, whose channel is ``conj(H~)``,
    is diagonalised by the same ``V`` with eigenvalues ``Q @ mu``.
    """
    v = _eigenvectors(n)
    q = v.T @ v
    rounded = np.round(q.real)
    if (np.abs(q - rounded).max() > 1e-12
            or not np.array_equal(np.abs(rounded).sum(axis=0), np.ones(n))
            or not np.array_equal(np.abs(rounded).sum(axis=1), np.ones(n))):
        raise StructuralViolation("V^T V is a permutation")
    return rounded


# ---------------------------------------------------------------------------
# eigenvalue recursion
# ---------------------------------------------------------------------------

def _s_rec(a):
    n = a.shape[-1]
    if n == 1:
        return a.astype(complex)
    if n == 2:
        return np.stack([a[..., 0] + a[..., 1], a[..., 0] - a[..., 1]],
                        axis=-1).astype(complex)
    s = _s_rec(a[..., :n // 2])
    t = _t_rec(a[..., n // 2:])
    out = np.empty(a.shape, dtype=complex)
    out[..., 0::2] = s - 1j * t
    out[..., 1::2] = s + 1j * t
    return out


def _t_rec(b):
    n = b.shape[-1]
    if n == 2:
        return 1j * np.stack([b[..., 0] - b[..., 1], b[..., 0] + b[..., 1]],
                             axis=-1)
    t = _t_rec(b[..., :n // 2])
    s = _s_rec(b[..., n // 2:])
    out = np.empty(b.shape, dtype=complex)
    out[..., 0::2] = t - 1j * s
    out[..., 1::2] = t + 1j * s
    return out


def eigenvalues_recursive(alpha):
    """Eigenvalues of ``M_N(alpha)`` in the order of the columns of ``V_N``.

    Accepts a batch of coefficient vectors along the last axis.
    """
    alpha = np.asarray(alpha, dtype=float)
    _require_pow2(alpha.shape[-1], 1, "len(alpha)")
    mu = _s_rec(alpha)
    scale = np.maximum(np.abs(alpha).max(axis=-1, keepdims=True), 1.0)
    if np.any(np.abs(mu.imag) > 1e-10 * scale):
        raise StructuralViolation("eigenvalue recursion is real",
                                  "imaginary residue in S_N")
    return mu.real


# ---------------------------------------------------------------------------
# projector family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProjectorFamily:
    """Rank-2 Hermitian projectors ``A^j``, ``j = 1..n_T/2``.

    ``matrices`` has shape ``(n_T/2, n_T, n_T)``.
    """

    n_t: int
    matrices: np.ndarray

    def __len__(self):
        return self.matrices.shape[0]

    def __getitem__(self, j):
        return self.matrices[j]


@lru_cache(maxsize=None)
def _projectors(n_t):
    if n_t == 2:
        return (np.eye(2, dtype=complex),)
    theta = np.diag((-1.0) ** np.arange(n_t // 2))
    fam = []
    for a in _projectors(n_t // 2):
        b = 1j * theta @ a
        fam.append(0.5 * np.block([[a, -b], [b, a]]))
        fam.append(0.5 * np.block([[a, b], [-b, a]]))
    return tuple(fam)


def build_projectors(n_t):
    _require_pow2(n_t, 2, "n_T")
    mats = np.stack(_projectors(n_t))
    mats.setflags(write=False)
    return ProjectorFamily(n_t=n_t, matrices=mats)


@njit
def _quadratic_numba(h, a, out):
    nb, nt, nr = h.shape
    nj = a.shape[0]
    for b in range(nb):
        for j in range(nj):
            acc = 0.0
            for i in range(nr):
                for k in range(nt):
                    row = 0.0 + 0.0j
                    for l in range(nt):
                        ajkl = a[j, k, l]
                        if ajkl != 0:
                            row += ajkl * h[b, l, i]
                    acc += (h[b, k, i].conjugate() * row).real
            out[b, j] = acc
    return out


def _quadratic_numpy(h, a):
    out = np.empty((h.shape[0], a.shape[0]))
    hc = np.conj(h)
    for j in range(a.shape[0]):
        out[:, j] = np.sum(hc * (a[j] @ h), axis=(1, 2)).real
    return out


def eigenvalues_quadratic(h, projectors=None, backend=None):
    """``mu~_j^2 = sum_i h_i^H A^j h_i`` for one channel or a batch.

    ``h`` is ``(n_T, n_R)`` or ``(batch, n_T, n_R)`` (a
    ``ChannelRealization`` is accepted too).  Returns ``(n_T/2,)`` or
    ``(batch, n_T/2)``.
    """
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    single = h.ndim == 2
    hb = h[None] if single else h
    n_t = hb.shape[1]
    if projectors is None:
        projectors = build_projectors(n_t)
    a = np.ascontiguousarray(projectors.matrices)
    if a.shape[1] != n_t:
        raise UsageError("projector family does not match n_T")
    hb = np.ascontiguousarray(hb)
    if resolve(backend) == "numba":
        out = _quadratic_numba(hb, a, np.empty((hb.shape[0], a.shape[0])))
    else:
        out = _quadratic_numpy(hb, a)
    return out[0] if single else out


def noncentrality(mean, projectors=None):
    """``delta_j = sum_i m_i^H A^j m_i`` for a Ricean mean matrix."""
    return eigenvalues_quadratic(np.asarray(mean, dtype=complex), projectors,
                                 backend="numpy")


# ---------------------------------------------------------------------------
# Jacobi oracle
# ---------------------------------------------------------------------------

@njit
def _jacobi_one(a, v, tol, max_sweeps):
    n = a.shape[0]
    norm = 0.0
    for p in range(n):
        for q in range(n):
            norm += abs(a[p, q]) ** 2
    norm = np.sqrt(norm)
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += abs(a[p, q]) ** 2
        if np.sqrt(off) <= tol * norm:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                ph = apq / mag
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * mag)
                if tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # G = [[c, s], [-s conj(ph), c conj(ph)]] on columns p, q
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * ph.conjugate() * akq
                    a[k, q] = s * akp + c * ph.conjugate() * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * ph * aqk
                    a[q, k] = s * apk + c * ph * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * ph.conjugate() * vkq
                    v[k, q] = s * vkp + c * ph.conjugate() * vkq
    return sweeps


@njit
def _jacobi_batch_numba(a, v, tol, max_sweeps):
    for b in range(a.shape[0]):
        _jacobi_one(a[b], v[b], tol, max_sweeps)


def _jacobi_batch_numpy(a, v, tol, max_sweeps):
    n = a.shape[-1]
    idx = np.arange(a.shape[0])
    offmask = ~np.eye(n, dtype=bool)
    norm = np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2)))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[:, offmask]) ** 2, axis=1))
        if np.all(off <= tol * norm):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                mag = np.abs(apq)
                live = mag >= 1e-300
                ph = np.where(live, apq / np.where(live, mag, 1.0), 1.0)
                tau = (a[:, q, q].real - a[:, p, p].real) / (
                    2.0 * np.where(live, mag, 1.0))
                t = np.where(tau >= 0, 1.0, -1.0) / (
                    np.abs(tau) + np.hypot(1.0, tau))
                t = np.where(live, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                phc = np.conj(ph)
                cp, cq = a[:, :, p].copy(), a[:, :, q].copy()
                a[:, :, p] = c[:, None] * cp - (s * phc)[:, None] * cq
                a[:, :, q] = s[:, None] * cp + (c * phc)[:, None] * cq
                rp, rq = a[:, p, :].copy(), a[:, q, :].copy()
                a[:, p, :] = c[:, None] * rp - (s * ph)[:, None] * rq
                a[:, q, :] = s[:, None] * rp + (c * ph)[:, None] * rq
                a[idx, p, q] = 0.0
                a[idx, q, p] = 0.0
                a[:, p, p] = a[:, p, p].real
                a[:, q, q] = a[:, q, q].real
                vp, vq = v[:, :, p].copy(), v[:, :, q].copy()
                v[:, :, p] = c[:, None] * vp - (s * phc)[:, None] * vq
                v[:, :, q] = s[:, None] * vp + (c * phc)[:, None] * vq


def hermitian_eig_oracle(m, tol=1e-12, max_sweeps=100, backend=None):
    """Cyclic complex Jacobi diagonalisation of Hermitian matrices.

    Independent of the structured recursion, so it serves as the oracle
    for it.  ``m`` is ``(N, N)`` or ``(batch, N, N)``; returns
    ``(values, vectors)`` with ``m = vectors @ diag(values) @ vectors^H``
    and values in the order Jacobi leaves them (unsorted).
    """
    m = np.asarray(m, dtype=complex)
    single = m.ndim == 2
    a = np.array(m[None] if single else m, dtype=complex, order="C")
    herm_err = np.abs(a - np.conj(np.swapaxes(a, 1, 2))).max(initial=0.0)
    scale = max(1.0, np.abs(a).max(initial=0.0))
    if herm_err > 1e-10 * scale:
        raise UsageError("hermitian_eig_oracle needs a Hermitian input")
    v = np.ascontiguousarray(
        np.broadcast_to(np.eye(a.shape[-1], dtype=complex), a.shape).copy())
    if resolve(backend) == "numba":
        _jacobi_batch_numba(a, v, tol, max_sweeps)
    else:
        _jacobi_batch_numpy(a, v, tol, max_sweeps)
    values = np.real(np.diagonal(a, axis1=1, axis2=2)).copy()
    return (values[0], v[0]) if single else (values, v)


def diagonalization_residual(htilde, v):
    """Off-diagonal Frobenius norm of ``V^H H~ V`` relative to ``||H~||``."""
    htilde = np.asarray(getattr(htilde, "htilde", htilde), dtype=complex)
    v = np.asarray(v, dtype=complex)
    d = v.conj().T @ htilde @ v
    off = d - np.diag(np.diag(d))
    norm = np.linalg.norm(htilde)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(off) / norm)


# ---------------------------------------------------------------------------
# whitening
# ---------------------------------------------------------------------------

def prewhitener(eq, rel_floor=1e-12):
    """Pre-whitening filter ``F = D^-1 V^H`` for an equivalent channel.

    ``eq`` is an :class:`~qstbc.channel.EquivalentChannel` (or anything
    with an ``alpha`` attribute, or the coefficient vector itself; batches
    along leading axes are allowed).  Returns ``(F, d)`` with ``d`` the
    diagonal of ``D = sqrt(S)`` in ``V`` column order.
    """
    alpha = np.asarray(getattr(eq, "alpha", eq), dtype=float)
    mu = eigenvalues_recursive(alpha)
    a1 = alpha[..., :1]
    if np.any(a1 <= 0) or np.any(mu <= rel_floor * a1):
        raise DegenerateChannelError("equivalent channel is singular")
    d = np.sqrt(mu)
    v = _eigenvectors(alpha.shape[-1])
    return v.conj().T / d[..., :, None], d


def degenerate_mask(alpha, rel_floor=1e-12):
    """True where the equivalent channel would be rejected by prewhitener."""
    alpha = np.asarray(alpha, dtype=float)
    mu = eigenvalues_recursive(alpha)
    a1 = alpha[..., 0]
    return (a1 <= 0) | np.any(mu <= rel_floor * alpha[..., :1], axis=-1)


@dataclass(frozen=True)
class EigenStructure:
    """Eigen-decomposition of one equivalent channel.

    ``mu`` are the eigenvalues of ``H~`` in ``V`` column order,
    ``mu_tilde_sq = (2/n_T) mu`` and ``d = sqrt(mu)``.
    """

    n: int
    v: np.ndarray
    pi: np.ndarray
    mu: np.ndarray

    @property
    def n_t(self):
        return 2 * self.n

    @property
    def mu_tilde_sq(self):
        return self.mu * (2.0 / self.n_t)

    @property
    def d(self):
        return np.sqrt(np.maximum(self.mu, 0.0))


def eigen_structure(eq):
    alpha = np.asarray(getattr(eq, "alpha", eq), dtype=float)
    n = alpha.size
    return EigenStructure(n=n, v=build_eigenvectors(n),
                          pi=build_permutation(n),
                          mu=eigenvalues_recursive(alpha))
