"""Special functions and distribution primitives behind the outage bounds.

Scalar routines are written in the numba-compilable subset of Python and
compiled on first use.  The ``*_array`` entry points evaluate over numpy
arrays, either through the compiled loops or through vectorised numpy
twins (see :mod:`qstbc._accel`).

All gamma-family distributions use unit scale, i.e. ``gamma(k, 1)``.  A
chi-square variable with ``2k`` degrees of freedom is twice a
``gamma(k, 1)`` variable.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, pick, resolve
from .errors import DomainError, UsageError

__all__ = [
    "DistributionSpec", "ln_gamma", "digamma", "reg_lower_incomplete_gamma",
    "reg_lower_incomplete_gamma_array", "bessel_k0", "bessel_k0_array",
    "noncentral_gamma_cdf", "noncentral_gamma_cdf_array", "f_ratio_pdf",
    "f_ratio_cdf", "ks_statistic", "EULER_GAMMA",
]

EULER_GAMMA = 0.57721566490153286061

_EPS = 1e-16
_FPMIN = 1e-300
_MAXIT = 100000
# Poisson tail mass below which the noncentral mixture is truncated.
_POISSON_TAIL = 1e-14


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------

@njit
def _digamma(x):
    acc = 0.0
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    tail = f * (-1.0 / 12 + f * (1.0 / 120 + f * (-1.0 / 252 + f * (
        1.0 / 240 + f * (-1.0 / 132 + f * (691.0 / 32760 + f * (-1.0 / 12)))))))
    return acc + math.log(x) - 0.5 / x + tail


@njit
def _gammainc_lower(a, x):
    if x <= 0.0:
        return 0.0
    log_pref = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for _ in range(_MAXIT):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        p = total * math.exp(log_pref)
    else:
        # modified Lentz evaluation of the continued fraction for Q(a, x)
        b = x + 1.0 - a
        c = 1.0 / _FPMIN
        d = 1.0 / b
        h = d
        for i in range(1, _MAXIT):
            an = -i * (i - a)
            b += 2.0
            d = an * d + b
            if abs(d) < _FPMIN:
                d = _FPMIN
            c = b + an / c
            if abs(c) < _FPMIN:
                c = _FPMIN
            d = 1.0 / d
            delta = d * c
            h *= delta
            if abs(delta - 1.0) < _EPS:
                break
        p = 1.0 - math.exp(log_pref) * h
    if p < 0.0:
        return 0.0
    if p > 1.0:
        return 1.0
    return p


@njit
def _k0(x):
    if x <= 2.0:
        # K0 = -(ln(x/2) + gamma) I0(x) + sum_k (x^2/4)^k / (k!)^2 H_k
        q = 0.25 * x * x
        term = 1.0
        i0 = 1.0
        hsum = 0.0
        harmonic = 0.0
        for k in range(1, 200):
            term *= q / (k * k)
            harmonic += 1.0 / k
            i0 += term
            hsum += term * harmonic
            if term < 1e-18 * i0:
                break
        return -(math.log(0.5 * x) + 0.57721566490153286061) * i0 + hsum
    # Steed's continued fraction (Temme's CF2) for order zero
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d
    delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25
    q = a1
    c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, _MAXIT):
        a -= 2.0 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    return math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s


@njit
def _poisson_window(mean):
    """First index of the Poisson weights worth summing."""
    if mean <= 0.0:
        return 0
    lo = mean - 12.0 * math.sqrt(mean) - 20.0
    return int(lo) if lo > 0.0 else 0


@njit
def _poisson_terms(shape, lam):
    """Poisson(lam/2) weights from the window start, and matching
    ``lgamma(shape + j + 1)``; stops once the tail mass is negligible."""
    mean = 0.5 * lam
    j0 = _poisson_window(mean)
    log_mean = math.log(mean)
    w = np.empty(64)
    lg = np.empty(64)
    n = 0
    mass = 0.0
    j = j0
    while True:
        if n == w.shape[0]:
            w = np.concatenate((w, np.empty(n)))
            lg = np.concatenate((lg, np.empty(n)))
        wj = math.exp(-mean + j * log_mean - math.lgamma(j + 1.0))
        w[n] = wj
        lg[n] = math.lgamma(shape + j + 1.0)
        mass += wj
        n += 1
        if j > mean and (1.0 - mass < _POISSON_TAIL or wj < 1e-18):
            break
        j += 1
    return j0, w[:n], lg[:n]


@njit
def _noncentral_point(shape, j0, w, lg, x):
    if x <= 0.0:
        return 0.0
    a = shape + j0
    p = _gammainc_lower(a, x)
    log_x = math.log(x)
    total = 0.0
    for k in range(w.shape[0]):
        total += w[k] * p
        # P(a+1, x) = P(a, x) - x^a e^-x / Gamma(a+1)
        p -= math.exp(a * log_x - x - lg[k])
        if p < 0.0:
            p = 0.0
        a += 1.0
    if total > 1.0:
        return 1.0
    return total


@njit
def _noncentral_gamma_cdf(shape, lam, x):
    if x <= 0.0:
        return 0.0
    if lam == 0.0:
        return _gammainc_lower(shape, x)
    j0, w, lg = _poisson_terms(shape, lam)
    return _noncentral_point(shape, j0, w, lg, x)


@njit
def _gammainc_lower_loop(a, x, out):
    for i in range(x.shape[0]):
        out[i] = _gammainc_lower(a, x[i])
    return out


@njit
def _k0_loop(x, out):
    for i in range(x.shape[0]):
        out[i] = _k0(x[i])
    return out


@njit
def _noncentral_loop(shape, lam, x, out):
    if lam == 0.0:
        return _gammainc_lower_loop(shape, x, out)
    j0, w, lg = _poisson_terms(shape, lam)
    for i in range(x.shape[0]):
        out[i] = _noncentral_point(shape, j0, w, lg, x[i])
    return out


# ---------------------------------------------------------------------------
# numpy twins
# ---------------------------------------------------------------------------

def _gammainc_lower_np(a, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    lgam = math.lgamma(a)
    ser = pos & (x < a + 1.0)
    if ser.any():
        xs = x[ser]
        term = np.full_like(xs, 1.0 / a)
        total = term.copy()
        ap = a
        active = np.ones(xs.shape, dtype=bool)
        for _ in range(_MAXIT):
            ap += 1.0
            term = np.where(active, term * xs / ap, 0.0)
            total += term
            active &= np.abs(term) >= np.abs(total) * _EPS
            if not active.any():
                break
        out[ser] = total * np.exp(-xs + a * np.log(xs) - lgam)
    cf = pos & ~ser
    if cf.any():
        xs = x[cf]
        b = xs + 1.0 - a
        c = np.full_like(xs, 1.0 / _FPMIN)
        d = 1.0 / b
        h = d.copy()
        active = np.ones(xs.shape, dtype=bool)
        for i in range(1, _MAXIT):
            an = -i * (i - a)
            b = b + 2.0
            d = an * d + b
            d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
            c = b + an / c
            c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
            d = 1.0 / d
            delta = np.where(active, d * c, 1.0)
            h *= delta
            active &= np.abs(delta - 1.0) >= _EPS
            if not active.any():
                break
        out[cf] = 1.0 - np.exp(-xs + a * np.log(xs) - lgam) * h
    return np.clip(out, 0.0, 1.0)


def _k0_np(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 2.0
    if small.any():
        xs = x[small]
        q = 0.25 * xs * xs
        term = np.ones_like(xs)
        i0 = np.ones_like(xs)
        hsum = np.zeros_like(xs)
        harmonic = 0.0
        for k in range(1, 200):
            term = term * q / (k * k)
            harmonic += 1.0 / k
            i0 += term
            hsum += term * harmonic
            if np.all(term < 1e-18 * i0):
                break
        out[small] = -(np.log(0.5 * xs) + EULER_GAMMA) * i0 + hsum
    big = ~small
    if big.any():
        xs = x[big]
        b = 2.0 * (1.0 + xs)
        d = 1.0 / b
        h = d.copy()
        delh = d.copy()
        q1 = np.zeros_like(xs)
        q2 = np.ones_like(xs)
        q = np.full_like(xs, 0.25)
        c = 0.25
        a = -0.25
        s = 1.0 + q * delh
        active = np.ones(xs.shape, dtype=bool)
        for i in range(1, _MAXIT):
            a -= 2.0 * i
            c = -a * c / (i + 1.0)
            qnew = (q1 - b * q2) / a
            q1, q2 = q2, qnew
            q = q + c * qnew
            b = b + 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h = h + delh
            dels = np.where(active, q * delh, 0.0)
            s = s + dels
            active &= np.abs(dels / s) >= _EPS
            if not active.any():
                break
        out[big] = np.sqrt(np.pi / (2.0 * xs)) * np.exp(-xs) / s
    return out


def _noncentral_np(shape, lam, x):
    x = np.asarray(x, dtype=float)
    if lam == 0.0:
        return _gammainc_lower_np(shape, x)
    mean = 0.5 * lam
    j = _poisson_window.py_func(mean) if hasattr(_poisson_window, "py_func") \
        else _poisson_window(mean)
    a = shape + j
    pos = x > 0
    xs = np.where(pos, x, 1.0)
    p = _gammainc_lower_np(a, xs)
    log_x = np.log(xs)
    total = np.zeros_like(xs)
    mass = 0.0
    while True:
        w = math.exp(-mean + j * math.log(mean) - math.lgamma(j + 1.0))
        total += w * p
        mass += w
        if j > mean and (1.0 - mass < _POISSON_TAIL or w < 1e-18):
            break
        p = np.maximum(p - np.exp(a * log_x - xs - math.lgamma(a + 1.0)), 0.0)
        a += 1.0
        j += 1
    return np.where(pos, np.minimum(total, 1.0), 0.0)


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def ln_gamma(x):
    """Natural logarithm of the gamma function for ``x > 0``."""
    if not x > 0:
        raise DomainError(f"ln_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)


def digamma(x):
    """Digamma function (logarithmic derivative of gamma) for ``x > 0``."""
    if not x > 0:
        raise DomainError(f"digamma requires x > 0, got {x!r}")
    return pick(_digamma)(float(x))


def reg_lower_incomplete_gamma(a, x):
    """Regularized lower incomplete gamma ``P(a, x)``.

    Series expansion below ``x = a + 1`` and a continued fraction above;
    the result is clamped to ``[0, 1]``.
    """
    if not a > 0 or not x >= 0:
        raise DomainError(f"P(a, x) needs a > 0 and x >= 0, got ({a!r}, {x!r})")
    return pick(_gammainc_lower)(float(a), float(x))


def reg_lower_incomplete_gamma_array(a, x, backend=None):
    """Vectorised :func:`reg_lower_incomplete_gamma` over ``x``."""
    if not a > 0:
        raise DomainError(f"P(a, x) needs a > 0, got {a!r}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("P(a, x) needs x >= 0")
    flat = np.ascontiguousarray(x.ravel())
    if resolve(backend) == "numba":
        out = _gammainc_lower_loop(float(a), flat, np.empty_like(flat))
    else:
        out = _gammainc_lower_np(float(a), flat)
    return out.reshape(x.shape)


def bessel_k0(x):
    """Modified Bessel function of the second kind, order zero."""
    if not x > 0:
        raise DomainError(f"bessel_k0 requires x > 0, got {x!r}")
    return pick(_k0)(float(x))


def bessel_k0_array(x, backend=None):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("bessel_k0 requires x > 0")
    flat = np.ascontiguousarray(x.ravel())
    if resolve(backend) == "numba":
        out = _k0_loop(flat, np.empty_like(flat))
    else:
        out = _k0_np(flat)
    return out.reshape(x.shape)


def noncentral_gamma_cdf(shape, noncentrality, x):
    """CDF of a Poisson(noncentrality/2) mixture of ``gamma(shape + j, 1)``.

    This is the law of ``X/2`` for ``X`` noncentral chi-square with
    ``2*shape`` degrees of freedom and noncentrality ``noncentrality``.
    The mixture is summed until the remaining Poisson mass drops below
    1e-14.
    """
    if not shape > 0 or not noncentrality >= 0 or not x >= 0:
        raise DomainError("noncentral_gamma_cdf needs shape > 0, "
                          "noncentrality >= 0, x >= 0")
    return pick(_noncentral_gamma_cdf)(float(shape), float(noncentrality),
                                       float(x))


def noncentral_gamma_cdf_array(shape, noncentrality, x, backend=None):
    if not shape > 0 or not noncentrality >= 0:
        raise DomainError("noncentral_gamma_cdf needs shape > 0, "
                          "noncentrality >= 0")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("noncentral_gamma_cdf needs x >= 0")
    flat = np.ascontiguousarray(x.ravel())
    if resolve(backend) == "numba":
        out = _noncentral_loop(float(shape), float(noncentrality), flat,
                               np.empty_like(flat))
    else:
        out = _noncentral_np(float(shape), float(noncentrality), flat)
    return out.reshape(x.shape)


def f_ratio_pdf(r, n_r):
    """Density of the ratio of two i.i.d. ``gamma(2 n_r, 1)`` variables.

    ``h(r) = Gamma(4 n_r) / Gamma(2 n_r)^2 * r^(2 n_r - 1) / (1 + r)^(4 n_r)``
    """
    if n_r < 1 or int(n_r) != n_r:
        raise UsageError(f"n_r must be a positive integer, got {n_r!r}")
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("f_ratio_pdf requires r > 0")
    a = 2.0 * n_r
    log_norm = math.lgamma(2 * a) - 2 * math.lgamma(a)
    out = np.exp(log_norm + (a - 1) * np.log(r) - 2 * a * np.log1p(r))
    return out if out.ndim else float(out)


def f_ratio_cdf(r, n_r):
    """CDF of :func:`f_ratio_pdf` by Gauss-Legendre quadrature.

    Integrates ``h`` over ``(0, r]`` after mapping ``u = r/(1+r)``; in
    ``u`` the integrand ``h(r(u)) dr/du`` is a polynomial of degree
    ``4 n_r - 2``, so a rule with ``2 n_r`` or more nodes is exact.
    """
    if n_r < 1 or int(n_r) != n_r:
        raise UsageError(f"n_r must be a positive integer, got {n_r!r}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("f_ratio_cdf requires r >= 0")
    nodes, weights = np.polynomial.legendre.leggauss(max(16, 2 * int(n_r) + 2))
    u_max = r / (1.0 + r)
    # nodes mapped onto (0, u_max) for every r at once
    u = 0.5 * u_max[..., None] * (nodes + 1.0)
    safe = np.where(u > 0, u, 0.5)
    rr = safe / (1.0 - safe)
    integrand = np.where(u > 0, f_ratio_pdf(rr, n_r) / (1.0 - safe) ** 2, 0.0)
    out = 0.5 * u_max * np.sum(integrand * weights, axis=-1)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def ks_statistic(samples, cdf):
    """Kolmogorov-Smirnov distance between sorted samples and a CDF.

    Parameters
    ----------
    samples : array_like
        Non-empty, sorted ascending.
    cdf : callable
        Maps an array of points to CDF values.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise UsageError("ks_statistic needs at least one sample")
    if np.any(np.diff(x) < 0):
        raise UsageError("ks_statistic needs samples sorted ascending")
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


@dataclass(frozen=True)
class DistributionSpec:
    """A distribution from the gamma family used by the statistical checks.

    ``kind`` is one of ``gamma``, ``erlang``, ``noncentral-gamma`` or
    ``f-distribution``.  For the ratio law only ``dof`` is used; it holds
    the chi-square degrees of freedom of numerator and denominator, which
    must be equal multiples of four (``(4 n_r, 4 n_r)``).
    """

    kind: str
    shape: float = 1.0
    scale: float = 1.0
    noncentrality: float = 0.0
    dof: tuple = (4.0, 4.0)

    def __post_init__(self):
        if self.kind not in ("gamma", "erlang", "noncentral-gamma",
                             "f-distribution"):
            raise UsageError(f"unknown distribution kind {self.kind!r}")
        if not (self.shape > 0 and self.scale > 0 and self.noncentrality >= 0):
            raise DomainError("need shape > 0, scale > 0, noncentrality >= 0")
        if self.kind == "erlang" and int(self.shape) != self.shape:
            raise DomainError("erlang shape must be an integer")
        if self.kind == "f-distribution":
            d1, d2 = self.dof
            if d1 != d2 or d1 % 4 or d1 <= 0:
                raise UsageError("ratio law supports dof (4 n_r, 4 n_r) only")

    def cdf(self, x, backend=None):
        x = np.asarray(x, dtype=float)
        if self.kind == "f-distribution":
            return f_ratio_cdf(x, int(self.dof[0]) // 4)
        z = np.maximum(x, 0.0) / self.scale
        if self.kind == "noncentral-gamma":
            return noncentral_gamma_cdf_array(self.shape, self.noncentrality,
                                              z, backend=backend)
        return reg_lower_incomplete_gamma_array(self.shape, z, backend=backend)
