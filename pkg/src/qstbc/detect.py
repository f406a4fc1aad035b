"""Linear ML detection with eigenvector precoding, and the joint ML oracle.

With ``Gamma = V`` precoding, both decoupled halves leave the receive
pipeline as ``y^ = D s + w`` with diagonal ``D`` and white ``w``, so each
symbol is decided on its own.  The odd half sees ``D = sqrt(diag(mu))``;
the even half sees the same eigenvalues permuted by ``Q = V^T V``.
"""

from dataclasses import dataclass

import numpy as np

from .channel import (alphas, decouple, matched_filter, rearrange_receive,
                      sample_channels, stack_channel)
from .codec import interleave_halves, transmit_matrices
from .eigen import (_eigenvectors, degenerate_mask, even_permutation,
                    prewhitener)
from .errors import UsageError
from .streams import map_chunks

__all__ = [
    "DetectionResult", "HalfDecision", "BerRecord", "receive_pipeline",
    "linear_ml", "detect_linear", "joint_ml", "ber_experiment",
    "EquivalenceRecord", "equivalence_experiment", "MAX_CANDIDATES",
]

MAX_CANDIDATES = 10 ** 7
_CAND_CHUNK = 1 << 14


@dataclass(frozen=True)
class HalfDecision:
    """Per-coordinate decisions for one half: point indices and metric."""

    indices: np.ndarray
    symbols: np.ndarray
    metric: np.ndarray


@dataclass(frozen=True)
class DetectionResult:
    s_hat_minus: np.ndarray
    s_hat_plus: np.ndarray
    idx_minus: np.ndarray
    idx_plus: np.ndarray
    metric: float
    method: str


def receive_pipeline(y, h):
    """Rearrange, matched-filter, decouple and whiten a receive block.

    ``y`` is ``(T, n_R)`` and ``h`` is ``(n_T, n_R)``; leading batch axes
    are allowed on both.  Returns ``(yhat_odd, yhat_even, d_odd, d_even)``
    where ``yhat_odd = d_odd * s^- + w`` and ``yhat_even = d_even * s^+ + w``
    for symbols precoded with ``Gamma = V``.
    """
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    y = np.asarray(y, dtype=complex)
    if y.shape[-2] != h.shape[-2] or y.shape[-1] != h.shape[-1]:
        raise UsageError("Y must be T x n_R with T = n_T matching H")
    h2, y2 = matched_filter(stack_channel(h), rearrange_receive(y))
    eq = decouple(h2)
    f, d_odd = prewhitener(eq)
    n = eq.n
    d_even = d_odd @ even_permutation(n).T
    vh = _eigenvectors(n).conj().T
    yo = (f @ y2[..., 0::2, None])[..., 0]
    ye = (vh @ y2[..., 1::2, None])[..., 0] / d_even
    return yo, ye, d_odd, d_even


def linear_ml(yhat, d, constellation):
    """Symbol-by-symbol ML: ``argmin_c |yhat_j - d_j c|^2``.

    Ties go to the lowest constellation index.  Batches along leading axes
    are allowed; ``metric`` sums the per-coordinate minima.
    """
    yhat = np.asarray(yhat, dtype=complex)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise UsageError("whitened gains must be positive")
    pts = constellation.points
    dist = np.abs(yhat[..., None] - d[..., None] * pts) ** 2
    idx = np.argmin(dist, axis=-1)
    best = np.take_along_axis(dist, idx[..., None], axis=-1)[..., 0]
    return HalfDecision(indices=idx, symbols=pts[idx],
                        metric=best.sum(axis=-1))


def detect_linear(y, h, constellation):
    """Both halves of one block through the linear detector."""
    yo, ye, do, de = receive_pipeline(y, h)
    lo = linear_ml(yo, do, constellation)
    le = linear_ml(ye, de, constellation)
    return DetectionResult(s_hat_minus=lo.symbols, s_hat_plus=le.symbols,
                           idx_minus=lo.indices, idx_plus=le.indices,
                           metric=float(np.sum(lo.metric + le.metric)),
                           method="linear")


def _frobenius_metrics(y, h, x):
    g = transmit_matrices(x)
    r = y - g @ h
    return np.sum(np.abs(r) ** 2, axis=(-2, -1))


def _search(y, h, order, length, to_x):
    """Exhaustive argmin over ``order**length`` index tuples."""
    total = order ** length
    best_val, best_idx = np.inf, 0
    for start in range(0, total, _CAND_CHUNK):
        flat = np.arange(start, min(total, start + _CAND_CHUNK))
        digits = np.stack(np.unravel_index(flat, (order,) * length), axis=-1)
        vals = _frobenius_metrics(y, h, to_x(digits))
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_idx = float(vals[k]), int(flat[k])
    return np.array(np.unravel_index(best_idx, (order,) * length)), best_val


def joint_ml(y, h, constellation, n_t, split=True, precoder=None):
    """Exhaustive ML over the Frobenius metric ``||Y - G(x) H||^2``.

    ``x`` is built from candidate symbols by ``Gamma = V`` precoding.  With
    ``split=True`` the odd and even halves are searched separately, each
    against ``||Y - G(x~) H||^2`` with the other half zeroed; the full
    metric is ``m_odd + m_even - ||Y||^2``.  ``split=False`` searches all
    ``M^n_T`` tuples at once.
    """
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    y = np.asarray(y, dtype=complex)
    n = n_t // 2
    order = constellation.order
    count = order ** n if split else order ** n_t
    if count > MAX_CANDIDATES:
        raise UsageError(f"joint ML would enumerate {count} candidates "
                         f"(limit {MAX_CANDIDATES})")
    v = _eigenvectors(n) if precoder is None else np.asarray(precoder)
    pts = constellation.points

    if split:
        def odd_x(dig):
            u = pts[dig] @ v.T
            return interleave_halves(u, np.zeros_like(u))

        def even_x(dig):
            u = pts[dig] @ v.T
            return interleave_halves(np.zeros_like(u), u)

        im, mo = _search(y, h, order, n, odd_x)
        ip, me = _search(y, h, order, n, even_x)
        metric = mo + me - float(np.sum(np.abs(y) ** 2))
    else:
        def full_x(dig):
            return interleave_halves(pts[dig[:, :n]] @ v.T,
                                     pts[dig[:, n:]] @ v.T)

        idx, metric = _search(y, h, order, n_t, full_x)
        im, ip = idx[:n], idx[n:]
    return DetectionResult(s_hat_minus=pts[im], s_hat_plus=pts[ip],
                           idx_minus=im, idx_plus=ip, metric=float(metric),
                           method="joint" if split else "joint-unsplit")


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    ber: float
    stderr: float
    bit_errors: int
    n_bits: int
    degenerate: int
    joint_checked: int
    joint_mismatches: int


def _draw_channels(n_t, n_r, size, rng):
    h = sample_channels(n_t, n_r, size, rng)
    n_bad = 0
    while True:
        bad = degenerate_mask(alphas(h))
        if not bad.any():
            return h, n_bad
        n_bad += int(bad.sum())
        h[bad] = sample_channels(n_t, n_r, int(bad.sum()), rng)


def ber_experiment(n_t, n_r, constellation, snr_db_grid, n_blocks, seed,
                   workers=1, joint_check=0):
    """Bit error rate of the linear detector over block Rayleigh fading.

    Channels, symbols and unit noise are shared across the SNR grid
    (common random numbers), so the curve is smooth in SNR.  The first
    ``joint_check`` blocks of every Monte Carlo chunk are re-detected by
    :func:`joint_ml` at each SNR and mismatches counted.
    """
    if n_blocks < 1:
        raise UsageError("n_blocks must be >= 1")
    snr_db = np.asarray(snr_db_grid, dtype=float)
    rho = 10.0 ** (snr_db / 10.0)
    n = n_t // 2
    v = _eigenvectors(n)
    bits = constellation.bit_table
    bps = constellation.bits_per_symbol
    order = constellation.order

    def chunk(rng, size):
        h, n_bad = _draw_channels(n_t, n_r, size, rng)
        idx = rng.integers(order, size=(size, n_t))
        s = constellation.points[idx]
        x = interleave_halves(s[:, :n] @ v.T, s[:, n:] @ v.T)
        clean = transmit_matrices(x) @ h
        g = rng.standard_normal(clean.shape + (2,))
        z = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
        errs = np.empty((snr_db.size, size), dtype=np.int64)
        checks = np.zeros(snr_db.size, dtype=np.int64)
        mism = np.zeros(snr_db.size, dtype=np.int64)
        for k, r in enumerate(rho):
            y = clean + np.sqrt(n_t / r) * z
            yo, ye, do, de = receive_pipeline(y, h)
            dec = np.concatenate([linear_ml(yo, do, constellation).indices,
                                  linear_ml(ye, de, constellation).indices],
                                 axis=-1)
            errs[k] = np.sum(bits[dec] != bits[idx], axis=(-2, -1))
            for b in range(min(joint_check, size)):
                jr = joint_ml(y[b], h[b], constellation, n_t)
                checks[k] += 1
                jd = np.concatenate([jr.idx_minus, jr.idx_plus])
                mism[k] += int(np.any(jd != dec[b]))
        return errs, n_bad, checks, mism

    parts = map_chunks(chunk, n_blocks, seed, "ber", workers=workers)
    errs = np.concatenate([p[0] for p in parts], axis=1)
    n_bad = sum(p[1] for p in parts)
    checks = sum(p[2] for p in parts)
    mism = sum(p[3] for p in parts)
    per_block = n_t * bps
    out = []
    for k in range(snr_db.size):
        frac = errs[k] / per_block
        se = float(np.std(frac, ddof=1) / np.sqrt(n_blocks)) if n_blocks > 1 else 0.0
        out.append(BerRecord(snr_db=float(snr_db[k]), ber=float(frac.mean()),
                             stderr=se, bit_errors=int(errs[k].sum()),
                             n_bits=int(n_blocks * per_block),
                             degenerate=int(n_bad),
                             joint_checked=int(checks[k]),
                             joint_mismatches=int(mism[k])))
    return out


@dataclass(frozen=True)
class EquivalenceRecord:
    snr_db: float
    trials: int
    mismatches: int
    unsplit_checked: int
    unsplit_mismatches: int


def equivalence_experiment(n_t, n_r, constellation, snr_db_grid, n_trials,
                           seed, unsplit=False, workers=1):
    """Count decision mismatches between linear and joint ML.

    Every trial draws its own channel, symbols and noise.  With
    ``unsplit`` the full ``M^n_T`` search is run as well.
    """
    n = n_t // 2
    v = _eigenvectors(n)
    order = constellation.order
    out = []
    for k, sdb in enumerate(np.asarray(snr_db_grid, dtype=float)):
        rho = 10.0 ** (sdb / 10.0)

        def chunk(rng, size):
            h, _ = _draw_channels(n_t, n_r, size, rng)
            idx = rng.integers(order, size=(size, n_t))
            s = constellation.points[idx]
            x = interleave_halves(s[:, :n] @ v.T, s[:, n:] @ v.T)
            clean = transmit_matrices(x) @ h
            g = rng.standard_normal(clean.shape + (2,))
            y = clean + np.sqrt(n_t / (2.0 * rho)) * (g[..., 0] + 1j * g[..., 1])
            yo, ye, do, de = receive_pipeline(y, h)
            lin = np.concatenate([linear_ml(yo, do, constellation).indices,
                                  linear_ml(ye, de, constellation).indices],
                                 axis=-1)
            mism = umism = 0
            for b in range(size):
                jr = joint_ml(y[b], h[b], constellation, n_t)
                mism += int(np.any(np.concatenate([jr.idx_minus, jr.idx_plus])
                                   != lin[b]))
                if unsplit:
                    ur = joint_ml(y[b], h[b], constellation, n_t, split=False)
                    umism += int(np.any(np.concatenate([ur.idx_minus,
                                                        ur.idx_plus])
                                        != lin[b]))
            return mism, umism

        parts = map_chunks(chunk, n_trials, seed, f"detect-eq:{k}",
                           workers=workers, chunk=256)
        out.append(EquivalenceRecord(
            snr_db=float(sdb), trials=int(n_trials),
            mismatches=sum(p[0] for p in parts),
            unsplit_checked=int(n_trials) if unsplit else 0,
            unsplit_mismatches=sum(p[1] for p in parts)))
    return out
