"""Mutual information, outage probability and its bounds.

Per channel, the QSTBC mutual information is
``I_Q = (2/n_T) sum_j log2(1 + rho/2 * mu~_j^2)`` and it is sandwiched by

    I_Q^l = (2/n_T) log2(1 + (rho/n_T)^(n_T/2) prod_j mu_j)
    I_Q^u = log2(1 + rho alpha_1 / n_T)

with ``mu_j = (n_T/2) mu~_j^2``.  ``I_Q^u`` yields the outage lower bound
``P(n_T n_R, x)``; for ``n_T = 4``, ``I_Q^l`` yields an upper bound in
closed form through the product of two gamma variables.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .channel import alphas, ricean_mean, sample_channels
from .codec import _require_nt
from .eigen import (build_projectors, eigenvalues_quadratic,
                    eigenvalues_recursive, noncentrality)
from .errors import UsageError
from .specfun import (DistributionSpec, bessel_k0_array, digamma, f_ratio_cdf,
                      ks_statistic, ln_gamma, reg_lower_incomplete_gamma)
from .streams import map_chunks, stream

__all__ = [
    "OutageConfig", "BoundReport", "StatReport", "OmiReport",
    "mimo_mutual_info", "qstbc_mutual_info", "amgm_sandwich_check",
    "sample_statistics", "outage_mc", "outage_mutual_info",
    "lower_bound", "upper_bound_nt4", "upper_bound_series",
    "upper_bound_numeric", "upper_bound_first_term", "upper_bound_mc",
    "bounds_experiment", "eigen_stat_experiment", "r_tilde",
    "ratio_distribution_experiment", "lower_bound_mc",
]

SERIES_LIMIT = 3.9
MAX_TERMS = 500


@dataclass(frozen=True)
class OutageConfig:
    n_t: int
    n_r: int
    rate: float
    snr_db: tuple
    n_samples: int = 100_000
    seed: int = 0
    q: float = 0.1
    workers: int = 1

    def __post_init__(self):
        _require_nt(self.n_t)
        if self.n_r < 1:
            raise UsageError("n_R must be >= 1")
        if self.n_samples < 100:
            raise UsageError("n_samples must be >= 100")
        grid = tuple(float(s) for s in np.atleast_1d(self.snr_db))
        if not grid or not all(np.isfinite(grid)):
            raise UsageError("SNR grid must be nonempty and finite")
        if not 0 < self.q < 1:
            raise UsageError("outage level q must lie in (0, 1)")
        if self.rate < 0:
            raise UsageError("rate must be nonnegative")
        object.__setattr__(self, "snr_db", grid)

    @property
    def snr(self):
        return 10.0 ** (np.asarray(self.snr_db) / 10.0)


@dataclass(frozen=True)
class BoundReport:
    snr_db: float
    mc: float
    mc_stderr: float
    lower: float
    upper: float = None
    upper_stderr: float = None
    k0_approx: float = None
    upper_method: str = None


@dataclass(frozen=True)
class OmiReport:
    snr_db: float
    omi_q: float
    omi_q_stderr: float
    omi_mimo: float
    omi_mimo_stderr: float

    @property
    def ratio(self):
        return self.omi_q / self.omi_mimo if self.omi_mimo > 0 else float("nan")


@dataclass(frozen=True)
class StatReport:
    """Goodness-of-fit summary: KS distance per eigenvalue index and the
    sample correlation matrix between indices."""

    n_samples: int
    ks: tuple
    correlations: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def max_ks(self):
        return max(self.ks)

    @property
    def max_abs_corr(self):
        c = np.asarray(self.correlations)
        if c.shape[0] < 2:
            return 0.0
        return float(np.max(np.abs(c[~np.eye(c.shape[0], dtype=bool)])))


# ---------------------------------------------------------------------------
# mutual information
# ---------------------------------------------------------------------------

def mimo_mutual_info(h, rho):
    """``log2 det(I + rho/n_T H^H H)`` on the ``n_R x n_R`` side."""
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    n_t, n_r = h.shape[-2:]
    gram = np.conj(np.swapaxes(h, -1, -2)) @ h
    _, logdet = np.linalg.slogdet(np.eye(n_r) + (rho / n_t) * gram)
    return logdet / np.log(2.0)


def qstbc_mutual_info(mu_tilde_sq, rho, n_t):
    """``(2/n_T) sum_j log2(1 + rho/2 mu~_j^2)`` along the last axis."""
    mu = np.asarray(mu_tilde_sq, dtype=float)
    if np.any(mu < 0):
        raise UsageError("mu~^2 must be nonnegative")
    return (2.0 / n_t) * np.sum(np.log2(1.0 + 0.5 * rho * mu), axis=-1)


def _sandwich_from(mu_tilde_sq, alpha1, rho, n_t):
    mu = 0.5 * n_t * np.asarray(mu_tilde_sq, dtype=float)
    c = rho / n_t
    i_q = qstbc_mutual_info(mu_tilde_sq, rho, n_t)
    i_up = np.log2(1.0 + c * np.asarray(alpha1))
    i_lo = (2.0 / n_t) * np.log2(1.0 + np.prod(c * np.maximum(mu, 0.0), axis=-1))
    return i_lo, i_q, i_up


def amgm_sandwich_check(h, rho, n_t=None):
    """``(I_Q^l, I_Q, I_Q^u)`` for one channel or a batch."""
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    if n_t is None:
        n_t = h.shape[-2]
    if h.shape[-2] != n_t:
        raise UsageError("H does not have n_T rows")
    a = alphas(h)
    mu_tilde_sq = (2.0 / n_t) * eigenvalues_recursive(a)
    return _sandwich_from(mu_tilde_sq, a[..., 0], rho, n_t)


# ---------------------------------------------------------------------------
# Monte Carlo sampling
# ---------------------------------------------------------------------------

def sample_statistics(n_t, n_r, n_samples, seed, tag="channel", workers=1,
                      mean=None, variance=1.0, projectors=None, gram=False):
    """Per-channel statistics from ``n_samples`` deterministic draws.

    Returns a dict with ``mu_tilde_sq`` ``(n, n_T/2)``, ``alpha1`` ``(n,)``
    and, when ``gram`` is set, ``gram_eigs`` ``(n, n_R)`` (eigenvalues of
    ``H^H H``, enough to evaluate the MIMO mutual information at any SNR).
    """
    proj = projectors or build_projectors(n_t)

    def chunk(rng, size):
        h = sample_channels(n_t, n_r, size, rng, mean=mean, variance=variance)
        out = {"mu_tilde_sq": eigenvalues_quadratic(h, proj),
               "alpha1": np.sum(np.abs(h) ** 2, axis=(-2, -1))}
        if gram:
            g = np.conj(np.swapaxes(h, -1, -2)) @ h
            out["gram_eigs"] = np.clip(np.linalg.eigvalsh(g), 0.0, None)
        return out

    parts = map_chunks(chunk, n_samples, seed, tag, workers=workers)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _prob(mask):
    n = mask.size
    p = float(np.count_nonzero(mask)) / n
    return p, math.sqrt(p * (1.0 - p) / n)


def outage_mc(cfg, stats=None):
    """``[(P_out, stderr)]`` per SNR point with ``P_out = Pr[I_Q < R]``."""
    stats = stats or sample_statistics(cfg.n_t, cfg.n_r, cfg.n_samples,
                                       cfg.seed, "outage", cfg.workers)
    mu = stats["mu_tilde_sq"]
    return [_prob(qstbc_mutual_info(mu, rho, cfg.n_t) < cfg.rate)
            for rho in cfg.snr]


def _quantile_with_se(x, q, rng, n_boot):
    est = float(np.quantile(x, q))
    if n_boot <= 0:
        return est, float("nan")
    n = x.size
    boots = np.empty(n_boot)
    for b in range(n_boot):
        boots[b] = np.quantile(x[rng.integers(n, size=n)], q)
    return est, float(np.std(boots, ddof=1))


def outage_mutual_info(cfg, n_boot=100, stats=None):
    """``q``-quantile of ``I_Q`` and of the MIMO ``I`` per SNR point.

    Type-7 (linear interpolation) quantiles with bootstrap standard errors.
    Both quantities use the same channel draws.
    """
    stats = stats or sample_statistics(cfg.n_t, cfg.n_r, cfg.n_samples,
                                       cfg.seed, "omi", cfg.workers, gram=True)
    mu = stats["mu_tilde_sq"]
    lam = stats["gram_eigs"]
    out = []
    for k, rho in enumerate(cfg.snr):
        i_q = qstbc_mutual_info(mu, rho, cfg.n_t)
        i_m = np.sum(np.log2(1.0 + (rho / cfg.n_t) * lam), axis=-1)
        rng = stream(cfg.seed, "bootstrap", k)
        q_val, q_se = _quantile_with_se(i_q, cfg.q, rng, n_boot)
        m_val, m_se = _quantile_with_se(i_m, cfg.q, rng, n_boot)
        out.append(OmiReport(snr_db=cfg.snr_db[k], omi_q=q_val,
                             omi_q_stderr=q_se, omi_mimo=m_val,
                             omi_mimo_stderr=m_se))
    return out


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def _lb_threshold(rate, n_t, rho):
    return (n_t / rho) * (2.0 ** rate - 1.0)


def lower_bound(rate, n_t, n_r, rho):
    """``Pr[alpha_1 < x]`` with ``x = (n_T/rho)(2^R - 1)``: Erlang CDF."""
    if not (rate >= 0 and n_t >= 1 and n_r >= 1 and rho > 0):
        raise UsageError("lower_bound needs R >= 0, n_T, n_R >= 1, rho > 0")
    return reg_lower_incomplete_gamma(n_t * n_r, _lb_threshold(rate, n_t, rho))


def lower_bound_mc(rate, n_t, n_r, rho, stats):
    """MC estimate of ``Pr[alpha_1 < x]`` from sampled statistics."""
    return _prob(stats["alpha1"] < _lb_threshold(rate, n_t, rho))


def r_tilde(rate, rho):
    """Threshold on ``mu_1 mu_2`` for ``n_T = 4``: ``(4/rho)^2 (2^(2R) - 1)``."""
    return (4.0 / rho) ** 2 * (2.0 ** (2.0 * rate) - 1.0)


def _log_norm(a):
    # log of 1 / (Gamma(a)^2 2^(2a))
    return -2.0 * ln_gamma(a) - 2.0 * a * math.log(2.0)


def upper_bound_series(rt, n_r, tolerance=1e-14):
    """Series for ``Pr[mu_1 mu_2 < rt]``.  Returns ``(value, converged, terms)``.

    Term ``k`` carries ``(ln(4/rt) + 2 Psi(k+1) + 1/(a+k)) (rt/4)^k /
    ((a+k) k!^2)`` with ``a = 2 n_R``; summation stops when a term falls
    below ``tolerance`` times the partial sum.
    """
    if rt <= 0:
        return 0.0, True, 0
    a = 2.0 * n_r
    log_pref = a * math.log(rt) + _log_norm(a)
    lq = math.log(rt / 4.0)
    l4 = math.log(4.0 / rt)
    psi = digamma(1.0)
    total = 0.0
    converged = False
    k = 0
    for k in range(MAX_TERMS):
        if k:
            psi += 1.0 / k
        mag = math.exp(log_pref + k * lq - 2.0 * math.lgamma(k + 1.0))
        term = (l4 + 2.0 * psi + 1.0 / (a + k)) * mag / (a + k)
        total += term
        if k >= 1 and abs(term) < tolerance * abs(total):
            converged = True
            break
    return min(max(total, 0.0), 1.0), converged, k + 1


def upper_bound_first_term(rate, n_r, rho):
    """``k = 0`` truncation of the series."""
    rt = r_tilde(rate, rho)
    if rt <= 0:
        return 0.0
    a = 2.0 * n_r
    pref = math.exp(a * math.log(rt) + _log_norm(a))
    return pref * (math.log(4.0 / rt) + 2.0 * digamma(1.0) + 1.0 / a) / a


def _integral(rt, n_r):
    if rt <= 0:
        return 0.0
    a = 2.0 * n_r
    norm = math.exp(_log_norm(a) + math.log(2.0))

    def f(t):
        if t <= 0:
            return 0.0
        return 2.0 * t ** (2 * a - 1) * float(bessel_k0_array(t)) * norm

    t = math.sqrt(rt)
    peak = 2 * a - 1
    cap = 2 * a + 200.0

    def quad(lo, hi):
        return integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-11,
                              limit=200)[0]

    if t <= peak:
        return quad(0.0, t)
    # past the mode integrate the tail instead; unit total mass
    return 1.0 - (quad(t, cap) if t < cap else 0.0)


def upper_bound_numeric(rate, n_r, rho):
    """Quadrature of the ``K_0`` integral (substitution ``y = t^2``)."""
    return min(max(_integral(r_tilde(rate, rho), n_r), 0.0), 1.0)


def upper_bound_nt4(rate, n_r, rho, tolerance=1e-14, detail=False):
    """Outage upper bound for ``n_T = 4``.

    Uses the series below ``R~ = 3.9`` and quadrature otherwise (or when
    the series fails to converge).  With ``detail`` returns
    ``(value, method)``.
    """
    rt = r_tilde(rate, rho)
    method = "series"
    if rt < SERIES_LIMIT:
        val, ok, _ = upper_bound_series(rt, n_r, tolerance)
        if not ok:
            method = "quadrature"
    else:
        method = "quadrature"
    if method == "quadrature":
        val = min(max(_integral(rt, n_r), 0.0), 1.0)
    return (val, method) if detail else val


def upper_bound_mc(rate, n_t, rho, stats):
    """``Pr[I_Q^l < R]`` by Monte Carlo (any ``n_T``)."""
    mu = stats["mu_tilde_sq"]
    i_lo, _, _ = _sandwich_from(mu, stats["alpha1"], rho, n_t)
    return _prob(i_lo < rate)


def bounds_experiment(cfg, stats=None):
    """MC outage next to the analytic bounds at every SNR point."""
    stats = stats or sample_statistics(cfg.n_t, cfg.n_r, cfg.n_samples,
                                       cfg.seed, "bounds", cfg.workers)
    mc = outage_mc(cfg, stats)
    out = []
    for k, rho in enumerate(cfg.snr):
        lb = lower_bound(cfg.rate, cfg.n_t, cfg.n_r, rho)
        if cfg.n_t == 4:
            ub, method = upper_bound_nt4(cfg.rate, cfg.n_r, rho, detail=True)
            ub_se, k0 = None, None
            if r_tilde(cfg.rate, rho) < SERIES_LIMIT:
                k0 = min(max(upper_bound_first_term(cfg.rate, cfg.n_r, rho),
                             0.0), 1.0)
        elif cfg.n_t == 2:
            ub, ub_se, method, k0 = lb, None, "exact", None
        else:
            ub, ub_se = upper_bound_mc(cfg.rate, cfg.n_t, rho, stats)
            method, k0 = "mc", None
        out.append(BoundReport(snr_db=cfg.snr_db[k], mc=mc[k][0],
                               mc_stderr=mc[k][1], lower=lb, upper=ub,
                               upper_stderr=ub_se, k0_approx=k0,
                               upper_method=method))
    return out


# ---------------------------------------------------------------------------
# statistical experiments
# ---------------------------------------------------------------------------

def eigen_stat_experiment(n_t, n_r, n_samples, seed, mean=None, k_factor=None,
                          projectors=None, workers=1, backend=None):
    """KS of every ``mu~_j^2`` against its predicted law, plus correlations.

    Rayleigh: ``gamma(2 n_R, 1)``.  Ricean (``mean`` or ``k_factor``): the
    Poisson mixture with noncentrality ``2 delta_j / v``, where
    ``delta_j = sum_i m_i^H A^j m_i`` and ``v`` is the scatter variance.
    ``projectors`` substitutes the family used to form the statistics
    (negative controls); the reference law always uses the true family.
    """
    variance = 1.0
    if k_factor is not None:
        if mean is not None:
            raise UsageError("give either mean or k_factor, not both")
        mean, variance = ricean_mean(n_t, n_r, k_factor)
    stats = sample_statistics(n_t, n_r, n_samples, seed, "eigen-stats",
                              workers, mean=mean, variance=variance,
                              projectors=projectors)
    mu = stats["mu_tilde_sq"] / variance
    shape = 2.0 * n_r
    deltas = (np.zeros(n_t // 2) if mean is None
              else noncentrality(mean) / variance)
    ks = []
    for j in range(mu.shape[1]):
        spec = (DistributionSpec("gamma", shape=shape) if deltas[j] == 0
                else DistributionSpec("noncentral-gamma", shape=shape,
                                      noncentrality=2.0 * deltas[j]))
        ks.append(ks_statistic(np.sort(mu[:, j]),
                               lambda x, s=spec: s.cdf(x, backend=backend)))
    corr = np.corrcoef(mu, rowvar=False) if mu.shape[1] > 1 else np.ones((1, 1))
    return StatReport(n_samples=n_samples, ks=tuple(ks),
                      correlations=np.atleast_2d(corr),
                      extras={"noncentrality": tuple(2.0 * deltas)})


def ratio_distribution_experiment(n_r, n_samples, seed, workers=1,
                                  band=(0.8, 1.25)):
    """Law of ``r = mu~_1^2 / mu~_2^2`` at ``n_T = 4``."""
    stats = sample_statistics(4, n_r, n_samples, seed, "ratio", workers)
    mu = stats["mu_tilde_sq"]
    r = np.sort(mu[:, 0] / mu[:, 1])
    ks = ks_statistic(r, lambda x: f_ratio_cdf(x, n_r))
    mass = float(np.mean((r >= band[0]) & (r <= band[1])))
    return StatReport(n_samples=n_samples, ks=(ks,),
                      correlations=np.ones((1, 1)),
                      extras={"median": float(np.median(r)),
                              "mass_near_one": mass,
                              "mass_near_one_exact": float(
                                  f_ratio_cdf(band[1], n_r)
                                  - f_ratio_cdf(band[0], n_r))})
