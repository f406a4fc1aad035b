"""Channel sampling, receive synthesis and the decoupled equivalent channel.

Convention: every channel gain is ``m + CN(0, 1)`` (real and imaginary
parts ``N(0, 1/2)``), so ``alpha_1 = ||H||_F^2`` is Erlang(n_T n_R, 1)
for Rayleigh fading.  Noise is ``CN(0, n_T / rho)`` per entry.

The receive pipeline is ``Y -> y' -> (H'^H H', H'^H y')``.  The Gram
matrix ``H''`` splits into the odd-indexed block ``H~`` and the
even-indexed block ``conj(H~)``; the cross blocks vanish.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .codec import _require_nt
from .eigen import _first_row_pattern
from .errors import StructuralViolation, UsageError

__all__ = [
    "ChannelRealization", "NoiseModel", "EquivalentChannel",
    "sample_channel", "sample_channels", "ricean_mean", "sample_noise",
    "synthesize_receive", "stack_channel", "rearrange_receive",
    "matched_filter", "decouple", "equivalent_channel", "alphas",
    "ostbc_equivalent_gain",
]


@dataclass(frozen=True)
class ChannelRealization:
    """``n_T x n_R`` gain matrix with its Ricean mean (zero for Rayleigh)."""

    h: np.ndarray
    mean: np.ndarray = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 2:
            raise UsageError("H must be an n_T x n_R matrix")
        mean = (np.zeros_like(h) if self.mean is None
                else np.asarray(self.mean, dtype=complex))
        if mean.shape != h.shape:
            raise UsageError("Ricean mean must match H in shape")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "mean", mean)

    @property
    def n_t(self):
        return self.h.shape[0]

    @property
    def n_r(self):
        return self.h.shape[1]

    @property
    def is_rayleigh(self):
        return not np.any(self.mean)


@dataclass(frozen=True)
class NoiseModel:
    """AWGN at linear SNR ``rho``; ``snr = inf`` gives a noiseless link."""

    snr: float
    n_t: int

    def __post_init__(self):
        if not self.snr > 0:
            raise UsageError(f"SNR must be positive, got {self.snr!r}")

    @property
    def variance(self):
        """Per real dimension."""
        return self.n_t / (2.0 * self.snr)

    @property
    def complex_variance(self):
        return 2.0 * self.variance


@dataclass(frozen=True)
class EquivalentChannel:
    """The ``N x N`` Hermitian equivalent channel ``H~`` and its ``alpha``."""

    htilde: np.ndarray
    alpha: np.ndarray
    snr: float = field(default=None, compare=False)

    @property
    def n(self):
        return self.alpha.shape[-1]

    @property
    def n_t(self):
        return 2 * self.alpha.shape[-1]


def _as_h(h):
    return np.asarray(getattr(h, "h", h), dtype=complex)


def ricean_mean(n_t, n_r, k_factor):
    """Mean ``sqrt(K/(K+1))`` on every entry; scatter variance ``1/(K+1)``."""
    if k_factor < 0:
        raise UsageError("K-factor must be nonnegative")
    mean = np.full((n_t, n_r), np.sqrt(k_factor / (k_factor + 1.0)),
                   dtype=complex)
    return mean, 1.0 / (k_factor + 1.0)


def sample_channels(n_t, n_r, size, rng, mean=None, variance=1.0):
    """``size`` independent channels, shape ``(size, n_T, n_R)``."""
    if n_t < 1 or n_r < 1:
        raise UsageError("channel dimensions must be >= 1")
    g = rng.standard_normal((size, n_t, n_r, 2))
    h = np.sqrt(variance / 2.0) * (g[..., 0] + 1j * g[..., 1])
    if mean is not None:
        h = h + np.asarray(mean, dtype=complex)
    return h


def sample_channel(n_t, n_r, rng, mean=None, k_factor=None):
    """One block-fading realization.

    ``mean`` is an explicit Ricean mean matrix; alternatively ``k_factor``
    builds the all-equal mean with scatter variance ``1/(K+1)``.
    """
    variance = 1.0
    if k_factor is not None:
        if mean is not None:
            raise UsageError("give either mean or k_factor, not both")
        mean, variance = ricean_mean(n_t, n_r, k_factor)
    h = sample_channels(n_t, n_r, 1, rng, mean, variance)[0]
    return ChannelRealization(h=h, mean=mean)


def sample_noise(shape, noise, rng):
    """Complex Gaussian noise with the model's per-real-dimension variance."""
    if np.isinf(noise.snr):
        return np.zeros(shape, dtype=complex)
    g = rng.standard_normal(tuple(shape) + (2,))
    return np.sqrt(noise.variance) * (g[..., 0] + 1j * g[..., 1])


def synthesize_receive(g, h, noise, rng):
    """``Y = G H + N``.  ``g`` may be a batch ``(..., T, n_T)``."""
    g = np.asarray(g, dtype=complex)
    h = _as_h(h)
    if g.shape[-1] != h.shape[-2]:
        raise UsageError(
            f"G has {g.shape[-1]} columns but H has {h.shape[-2]} rows")
    y = g @ h
    return y + sample_noise(y.shape, noise, rng)


# ---------------------------------------------------------------------------
# stacked channel
# ---------------------------------------------------------------------------

def _stack_block(h):
    n = h.shape[0]
    if n == 2:
        return np.array([[h[0], h[1]],
                         [-np.conj(h[1]), np.conj(h[0])]])
    k = _stack_block(h[:n // 2])
    l = _stack_block(h[n // 2:])
    signs = (-1.0) ** np.arange(n // 2)
    # Theta X Theta == X * outer(signs, signs)
    tt = np.outer(signs, signs)
    return np.block([[k, l], [-l * tt, k * tt]])


@lru_cache(maxsize=None)
def _stack_basis(n_t):
    # H'(h) = sum_j h_j P[j] + conj(h_j) Q[j] for one receive column
    eye = np.eye(n_t, dtype=complex)
    re = np.stack([_stack_block(e) for e in eye])
    im = np.stack([_stack_block(1j * e) for e in eye])
    p = 0.5 * (re - 1j * im)
    q = 0.5 * (re + 1j * im)
    p.setflags(write=False)
    q.setflags(write=False)
    return p, q


def stack_channel(h):
    """Stacked channel ``H'`` of shape ``(n_T n_R, n_T)``.

    Accepts one channel ``(n_T, n_R)`` or a batch ``(B, n_T, n_R)``; the
    per-antenna blocks are stacked in receive-antenna order.
    """
    h = _as_h(h)
    n_t = h.shape[-2]
    _require_nt(n_t)
    p, q = _stack_basis(n_t)
    blocks = (np.einsum("...ji,jtk->...itk", h, p)
              + np.einsum("...ji,jtk->...itk", np.conj(h), q))
    return blocks.reshape(h.shape[:-2] + (-1, n_t))


def rearrange_receive(y):
    """``y'``: per antenna, even (1-based) rows conjugated, then stacked.

    ``y`` is ``(T, n_R)`` or a batch ``(B, T, n_R)``.
    """
    y = np.array(y, dtype=complex)
    y[..., 1::2, :] = np.conj(y[..., 1::2, :])
    return np.swapaxes(y, -1, -2).reshape(y.shape[:-2] + (-1,))


def matched_filter(hprime, yprime=None):
    """``(H'^H H', H'^H y')``; the second entry is ``None`` without ``y'``."""
    hprime = np.asarray(hprime, dtype=complex)
    hh = np.conj(np.swapaxes(hprime, -1, -2))
    h2 = hh @ hprime
    if yprime is None:
        return h2, None
    return h2, (hh @ np.asarray(yprime, dtype=complex)[..., None])[..., 0]


# ---------------------------------------------------------------------------
# decoupling
# ---------------------------------------------------------------------------

def _alpha_from_htilde(htilde):
    pattern = _first_row_pattern(htilde.shape[-1])
    return np.real(htilde[..., 0, :] / pattern)


def _fro(x):
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=(-2, -1)))


def decouple(h2, rtol=1e-10):
    """Split ``H''`` into the equivalent channel of the odd half.

    ``h2`` is ``(n_T, n_T)`` or a batch ``(B, n_T, n_T)``.  Raises
    :class:`StructuralViolation` when the cross blocks do not vanish, the
    even block is not ``conj`` of the odd block, or ``H~`` is not
    Hermitian (all relative to ``||H''||``).
    """
    h2 = np.asarray(h2, dtype=complex)
    if h2.ndim < 2 or h2.shape[-1] != h2.shape[-2] or h2.shape[-1] % 2:
        raise UsageError("H'' must be a square matrix of even size")
    scale = np.maximum(_fro(h2), np.finfo(float).tiny)
    odd = h2[..., 0::2, 0::2]
    even = h2[..., 1::2, 1::2]
    cross = _fro(h2[..., 0::2, 1::2]) / scale
    if np.any(cross > rtol):
        raise StructuralViolation("cross blocks of H'' vanish",
                                  f"|cross|/|H''| = {np.max(cross):.3e}")
    if np.any(_fro(even - np.conj(odd)) > rtol * scale):
        raise StructuralViolation("even block of H'' is conj(odd block)")
    if np.any(_fro(odd - np.conj(np.swapaxes(odd, -1, -2))) > rtol * scale):
        raise StructuralViolation("H~ is Hermitian")
    return EquivalentChannel(htilde=odd, alpha=_alpha_from_htilde(odd))


def equivalent_channel(h, snr=None):
    """Full path ``H -> H' -> H'' -> H~`` for one channel."""
    h2, _ = matched_filter(stack_channel(h))
    eq = decouple(h2)
    return EquivalentChannel(htilde=eq.htilde, alpha=eq.alpha, snr=snr)


def _alphas_nt4(h):
    h1, h2, h3, h4 = (h[..., k, :] for k in range(4))
    a1 = np.sum(np.abs(h) ** 2, axis=(-2, -1))
    a2 = np.sum(2 * np.imag(np.conj(h1) * h3 + np.conj(h4) * h2), axis=-1)
    return np.stack([a1, a2], axis=-1)


def _alphas_nt8(h):
    h1, h2, h3, h4, h5, h6, h7, h8 = (np.conj(h[..., k, :]) for k in range(8))
    g1, g2, g3, g4, g5, g6, g7, g8 = (h[..., k, :] for k in range(8))
    a1 = np.sum(np.abs(h) ** 2, axis=(-2, -1))
    a2 = np.sum(2 * np.imag(h1 * g3 + h4 * g2 + h5 * g7 + h8 * g6), axis=-1)
    a3 = np.sum(2 * np.imag(h1 * g5 + h6 * g2 + h3 * g7 + h8 * g4), axis=-1)
    a4 = np.sum(2 * np.real(h1 * g7 + h8 * g2 - h3 * g5 - h6 * g4), axis=-1)
    return np.stack([a1, a2, a3, a4], axis=-1)


def alphas(h, method="auto"):
    """Coefficient vector ``alpha`` of ``H~ = M_N(alpha)``.

    ``method="closed"`` uses the explicit sums for ``n_T`` 4 and 8,
    ``"extract"`` reads the first row of ``H~``; ``"auto"`` prefers the
    closed form when one exists.  Works on batches ``(B, n_T, n_R)``.
    """
    h = _as_h(h)
    n_t = h.shape[-2]
    _require_nt(n_t)
    closed = {4: _alphas_nt4, 8: _alphas_nt8}
    if method not in ("auto", "closed", "extract"):
        raise UsageError(f"unknown alpha method {method!r}")
    if method == "closed" and n_t not in closed:
        raise UsageError("closed-form alphas exist only for n_T in {4, 8}")
    if method != "extract" and n_t in closed:
        return closed[n_t](h)
    h2, _ = matched_filter(stack_channel(h))
    return _alpha_from_htilde(h2[..., 0::2, 0::2])


def ostbc_equivalent_gain(h):
    """Squared Frobenius norm of ``H`` (the OSTBC/Alamouti scalar gain)."""
    return float(np.sum(np.abs(_as_h(h)) ** 2))
