import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from qstbc.errors import DomainError, UsageError
from qstbc.specfun import (EULER_GAMMA, DistributionSpec, bessel_k0,
                           bessel_k0_array, digamma, f_ratio_cdf, f_ratio_pdf,
                           ks_statistic, ln_gamma, noncentral_gamma_cdf,
                           noncentral_gamma_cdf_array,
                           reg_lower_incomplete_gamma,
                           reg_lower_incomplete_gamma_array)


def test_ln_gamma_examples():
    assert ln_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
    assert ln_gamma(0.5) == pytest.approx(0.5723649429247001, abs=1e-12)
    assert ln_gamma(10.0) == pytest.approx(math.log(362880), abs=1e-12)


def test_ln_gamma_against_scipy():
    x = np.linspace(0.5, 200, 997)
    got = np.array([ln_gamma(v) for v in x])
    assert np.max(np.abs(got - special.gammaln(x))) < 1e-12


@pytest.mark.parametrize("fn", [ln_gamma, digamma, bessel_k0])
@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_domain_errors(fn, bad):
    with pytest.raises(DomainError):
        fn(bad)


def test_digamma_examples():
    assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-12)
    assert digamma(2.0) == pytest.approx(1 - EULER_GAMMA, abs=1e-12)
    # oracle: recurrence from psi(1) plus the harmonic sum
    assert digamma(5.0) == pytest.approx(-EULER_GAMMA + 1 + 1 / 2 + 1 / 3 + 1 / 4,
                                         abs=1e-12)


def test_digamma_against_scipy():
    x = np.concatenate([np.linspace(1e-3, 1, 50), np.linspace(1, 300, 300)])
    got = np.array([digamma(v) for v in x])
    assert np.max(np.abs(got - special.digamma(x))) < 1e-10


def test_incomplete_gamma_examples():
    assert reg_lower_incomplete_gamma(1, 0) == 0.0
    assert reg_lower_incomplete_gamma(1, 1) == pytest.approx(1 - math.exp(-1), abs=1e-14)
    finite = 1 - math.exp(-3) * (1 + 3 + 4.5 + 4.5)
    assert reg_lower_incomplete_gamma(4, 3) == pytest.approx(finite, abs=1e-12)
    assert finite == pytest.approx(0.352768, abs=1e-6)


@pytest.mark.parametrize("a", [1, 2, 4, 8, 16, 32, 64])
def test_incomplete_gamma_integer_finite_sum(a, backend):
    x = np.linspace(0, 3 * a + 20, 301)
    k = np.arange(a)
    finite = 1 - np.exp(-x) * np.sum(x[:, None] ** k / special.factorial(k), axis=1)
    got = reg_lower_incomplete_gamma_array(a, x, backend=backend)
    assert np.max(np.abs(got - finite)) < 1e-12


def test_incomplete_gamma_against_scipy(backend):
    for a in (0.3, 1.7, 6.5, 40.0, 96.0):
        x = np.linspace(0, 4 * a + 30, 500)
        got = reg_lower_incomplete_gamma_array(a, x, backend=backend)
        assert np.max(np.abs(got - special.gammainc(a, x))) < 1e-12


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.1, 60), x=st.floats(0, 200), dx=st.floats(0, 5))
def test_incomplete_gamma_monotone_and_clamped(a, x, dx):
    p0 = reg_lower_incomplete_gamma(a, x)
    p1 = reg_lower_incomplete_gamma(a, x + dx)
    assert 0.0 <= p0 <= p1 + 1e-15 <= 1.0 + 1e-15


def test_incomplete_gamma_domain():
    with pytest.raises(DomainError):
        reg_lower_incomplete_gamma(0, 1)
    with pytest.raises(DomainError):
        reg_lower_incomplete_gamma(1, -1)
    with pytest.raises(DomainError):
        reg_lower_incomplete_gamma_array(1, [-1.0])


def _k0_integral(x):
    # integrand is below 1e-300 well before t = 30 for x >= 0.1
    return integrate.quad(lambda t: math.exp(-x * math.cosh(t)), 0, 30,
                          epsabs=0, epsrel=1e-13, limit=200)[0]


@pytest.mark.parametrize("x", [0.1, 1.0, 2.0, 2.0001, 3.5, 10.0])
def test_k0_integral_oracle(x):
    assert bessel_k0(x) == pytest.approx(_k0_integral(x), rel=1e-9)


def test_k0_examples():
    assert bessel_k0(1.0) == pytest.approx(0.4210244382, abs=1e-10)
    assert bessel_k0(0.1) == pytest.approx(2.4270690, abs=1e-7)
    x = 50.0
    assert bessel_k0(x) * math.exp(x) * math.sqrt(2 * x / math.pi) == pytest.approx(1, rel=0.01)


def test_k0_against_scipy(backend):
    x = np.geomspace(1e-6, 50, 4000)
    got = bessel_k0_array(x, backend=backend)
    assert np.max(np.abs(got / special.k0(x) - 1)) < 1e-9


def test_k0_substitution_identity():
    # int_0^inf K0(sqrt(y)) dy = 2, computed with y = t^2
    val = integrate.quad(lambda t: 2 * t * bessel_k0(t) if t > 0 else 0.0,
                         0, 60, epsabs=1e-13, limit=200)[0]
    assert val == pytest.approx(2.0, abs=1e-6)


def test_noncentral_reduces_to_central(rng):
    shapes = rng.uniform(0.2, 20, 100)
    xs = rng.uniform(0, 60, 100)
    for a, x in zip(shapes, xs):
        assert abs(noncentral_gamma_cdf(a, 0.0, x)
                   - reg_lower_incomplete_gamma(a, x)) < 1e-12


def test_noncentral_examples():
    assert noncentral_gamma_cdf(2, 4, 0) == 0.0
    for x in (0.5, 3.0, 9.0):
        assert noncentral_gamma_cdf(2, 0, x) == reg_lower_incomplete_gamma(2, x)


def test_noncentral_mc_oracle(rng):
    # X = |m + z|^2 summed over 2 complex entries, z ~ CN(0,1); delta = |m|^2
    n = 10 ** 7
    m = np.sqrt(2.0)            # |m|^2 = 2 => lambda = 2 delta = 4
    z1 = rng.standard_normal((2, n), dtype=np.float32) / np.sqrt(2)
    re = z1[0] + m
    im = z1[1]
    q = re.astype(np.float64) ** 2 + im.astype(np.float64) ** 2
    del z1, re, im
    z2 = rng.standard_normal((2, n), dtype=np.float32) / np.sqrt(2)
    q += z2[0].astype(np.float64) ** 2 + z2[1].astype(np.float64) ** 2
    p = float(np.mean(q < 6.0))
    se = math.sqrt(p * (1 - p) / n)
    assert abs(noncentral_gamma_cdf(2, 4, 6) - p) < 3 * se


def test_noncentral_against_scipy(backend):
    x = np.linspace(0, 120, 1201)
    for shape, lam in ((2, 4), (4, 0.3), (8, 60), (1.5, 200)):
        ref = stats.ncx2.cdf(2 * x, 2 * shape, lam)
        got = noncentral_gamma_cdf_array(shape, lam, x, backend=backend)
        assert np.max(np.abs(got - ref)) < 1e-12


def test_f_ratio_pdf_examples():
    assert f_ratio_pdf(1.0, 1) == pytest.approx(6 / 16, abs=1e-15)
    r = np.geomspace(0.01, 100, 50)
    for n_r in (1, 3):
        assert np.allclose(f_ratio_pdf(r, n_r), f_ratio_pdf(1 / r, n_r) / r ** 2,
                           rtol=1e-12)


@pytest.mark.parametrize("n_r", [1, 2, 3, 6])
def test_f_ratio_pdf_normalised(n_r):
    total = sum(integrate.quad(lambda r: f_ratio_pdf(r, n_r), lo, hi,
                               epsabs=1e-13, limit=200)[0]
                for lo, hi in ((0, 1), (1, 100), (100, 1e6)))
    assert total == pytest.approx(1.0, abs=1e-6)


def test_f_ratio_concentrates():
    mass = [integrate.quad(lambda r: f_ratio_pdf(r, n), 0.9, 1.1)[0]
            for n in (1, 10, 100, 1000)]
    assert np.all(np.diff(mass) > 0)
    assert mass[-1] > 0.99


@pytest.mark.parametrize("n_r", [1, 3, 6])
def test_f_ratio_cdf_against_scipy(n_r):
    # mu1/mu2 with mu ~ gamma(2 n_r) is F(4 n_r, 4 n_r)
    r = np.geomspace(1e-3, 1e3, 200)
    assert np.max(np.abs(f_ratio_cdf(r, n_r)
                         - stats.f.cdf(r, 4 * n_r, 4 * n_r))) < 1e-12
    assert f_ratio_cdf(1.0, n_r) == pytest.approx(0.5, abs=1e-13)


def test_f_ratio_domain():
    with pytest.raises(UsageError):
        f_ratio_pdf(1.0, 0)
    with pytest.raises(DomainError):
        f_ratio_pdf(-1.0, 1)


def test_ks_plugin_and_constant():
    n = 1000
    spec = DistributionSpec("gamma", shape=2.0)
    x = stats.gamma.ppf((np.arange(1, n + 1) - 0.5) / n, 2.0)
    assert ks_statistic(x, spec.cdf) <= 0.5 / n + 1e-12
    assert ks_statistic(np.full(100, 2.0), spec.cdf) >= 0.5


def test_ks_large_sample(rng):
    n = 10 ** 5
    x = np.sort(rng.gamma(2.0, size=n))
    ks = ks_statistic(x, DistributionSpec("gamma", shape=2.0).cdf)
    assert ks < min(0.01, 1.63 / math.sqrt(n) * 1.5)


def test_ks_usage_errors():
    with pytest.raises(UsageError):
        ks_statistic([], lambda x: x)
    with pytest.raises(UsageError):
        ks_statistic([2.0, 1.0], lambda x: x)


@pytest.mark.parametrize("spec", [
    DistributionSpec("gamma", shape=3.0),
    DistributionSpec("erlang", shape=4.0, scale=2.0),
    DistributionSpec("noncentral-gamma", shape=2.0, noncentrality=5.0),
    DistributionSpec("f-distribution", dof=(8.0, 8.0)),
])
def test_distribution_spec_cdf_invariants(spec, backend):
    x = np.linspace(0, 400, 4001)
    f = spec.cdf(x, backend=backend) if spec.kind != "f-distribution" else spec.cdf(x)
    assert f[0] == 0.0
    assert np.all(np.diff(f) >= -1e-15)
    assert spec.cdf(np.array([1e6]))[0] == pytest.approx(1.0, abs=1e-10)


def test_distribution_spec_validation():
    with pytest.raises(UsageError):
        DistributionSpec("weibull")
    with pytest.raises(DomainError):
        DistributionSpec("gamma", shape=-1.0)
    with pytest.raises(DomainError):
        DistributionSpec("erlang", shape=2.5)
    with pytest.raises(UsageError):
        DistributionSpec("f-distribution", dof=(4.0, 8.0))
