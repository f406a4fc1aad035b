import math

import numpy as np
import pytest
from scipy import integrate, stats

from qstbc.analysis import (SERIES_LIMIT, OutageConfig, amgm_sandwich_check,
                            bounds_experiment, eigen_stat_experiment,
                            lower_bound, lower_bound_mc, mimo_mutual_info,
                            outage_mc, outage_mutual_info, qstbc_mutual_info,
                            r_tilde, ratio_distribution_experiment,
                            sample_statistics, upper_bound_first_term,
                            upper_bound_nt4, upper_bound_numeric,
                            upper_bound_series)
from qstbc.channel import alphas
from qstbc.eigen import ProjectorFamily, build_projectors, eigenvalues_quadratic
from qstbc.errors import UsageError

from conftest import crandn


def _product_cdf(thr, a):
    # Pr[X Y < thr], X, Y ~ gamma(a) independent
    return integrate.quad(lambda x: stats.gamma.pdf(x, a) * stats.gamma.cdf(thr / x, a),
                          0, np.inf, epsabs=1e-15, limit=400)[0]


def test_mimo_mi_examples():
    assert mimo_mutual_info(np.zeros((4, 2)), 10.0) == 0.0
    assert mimo_mutual_info(np.array([[1.0]]), 1.0) == pytest.approx(1.0, abs=1e-15)


def test_qstbc_mi_examples():
    assert qstbc_mutual_info([0, 0], 5.0, 4) == 0.0
    assert qstbc_mutual_info([3, 1], 2.0, 4) == pytest.approx(1.5, abs=1e-15)
    with pytest.raises(UsageError):
        qstbc_mutual_info([-1, 1], 2.0, 4)


def test_alamouti_capacity(rng):
    h = crandn(rng, 1000, 2, 1)
    for rho in (0.1, 1.0, 100.0):
        lo, iq, up = amgm_sandwich_check(h, rho)
        ref = np.array([mimo_mutual_info(hk, rho) for hk in h])
        assert np.max(np.abs(iq - ref)) < 1e-12


@pytest.mark.parametrize("n_t", [4, 8])
@pytest.mark.parametrize("n_r", [1, 2, 3])
def test_qstbc_below_mimo(n_t, n_r, rng):
    h = crandn(rng, 2000, n_t, n_r)
    mu = eigenvalues_quadratic(h)
    for rho in (1.0, 10.0, 1000.0):
        assert np.all(qstbc_mutual_info(mu, rho, n_t)
                      <= mimo_mutual_info(h, rho) + 1e-12)


@pytest.mark.parametrize("n_t", [4, 8])
def test_sandwich(n_t, rng):
    h = crandn(rng, 10000, n_t, 2)
    for rho in (0.3, 3.0, 300.0):
        lo, iq, up = amgm_sandwich_check(h, rho)
        assert np.min(iq - lo) >= -1e-12
        assert np.min(up - iq) >= -1e-12


def test_sandwich_equality_and_zero():
    h = np.zeros((4, 1), dtype=complex)
    h[0] = 2.0                          # alpha = (4, 0): equal eigenvalues
    assert alphas(h)[1] == 0
    lo, iq, up = amgm_sandwich_check(h, 5.0)
    assert iq == pytest.approx(up, abs=1e-14)
    assert amgm_sandwich_check(np.zeros((8, 2)), 5.0) == (0.0, 0.0, 0.0)


def test_lower_bound_examples():
    oracle = 1 - math.exp(-3) * (1 + 3 + 4.5 + 4.5)
    assert abs(lower_bound(2, 4, 1, 4) - oracle) < 1e-12
    assert lower_bound(2, 4, 1, 1e12) < 1e-20
    with pytest.raises(UsageError):
        lower_bound(2, 4, 1, 0.0)


def test_lower_bound_mc():
    st = sample_statistics(4, 1, 100000, seed=11, tag="lb")
    p, se = lower_bound_mc(2, 4, 1, 4.0, st)
    assert abs(p - lower_bound(2, 4, 1, 4.0)) < 3 * se


@pytest.mark.parametrize("n_r", [1, 2, 3])
@pytest.mark.parametrize("rt", [1e-3, 0.05, 0.5, 2.0, 3.5, 3.89])
def test_series_against_quadrature_and_oracle(n_r, rt):
    ser, ok, _ = upper_bound_series(rt, n_r)
    assert ok
    from qstbc.analysis import _integral
    assert ser == pytest.approx(_integral(rt, n_r), rel=1e-6)
    assert ser == pytest.approx(_product_cdf(rt / 4, 2 * n_r), rel=1e-6)


def test_series_edges():
    assert upper_bound_series(0.0, 1) == (0.0, True, 0)
    assert upper_bound_nt4(2, 1, 1e9) < 1e-12
    assert upper_bound_numeric(0.0, 1, 1.0) == 0.0
    assert upper_bound_numeric(4, 1, 1e-4) == pytest.approx(1.0, abs=1e-6)


def test_fallback_path():
    rate, rho = 4.0, 10.0
    assert r_tilde(rate, rho) > SERIES_LIMIT
    val, method = upper_bound_nt4(rate, 1, rho, detail=True)
    assert method == "quadrature"
    assert val == pytest.approx(_product_cdf(r_tilde(rate, rho) / 4, 2), rel=1e-6)


@pytest.mark.parametrize("n_r", [1, 2, 6])
def test_first_term(n_r):
    for rho in (100.0, 1000.0):
        rt = r_tilde(1.0, rho)
        assert rt < 0.1
        full = upper_bound_nt4(1.0, n_r, rho)
        assert upper_bound_first_term(1.0, n_r, rho) == pytest.approx(full, rel=0.1)


def test_upper_bound_mc_oracle():
    st = sample_statistics(4, 1, 100000, seed=12, tag="ub")
    mu = st["mu_tilde_sq"]
    for rate, rho in ((2.0, 4.0), (1.0, 2.0)):
        rt = r_tilde(rate, rho)
        p = np.mean(4 * mu[:, 0] * mu[:, 1] < rt)
        se = math.sqrt(p * (1 - p) / mu.shape[0])
        assert abs(upper_bound_numeric(rate, 1, rho) - p) < 3 * se


def test_outage_trivial():
    cfg = OutageConfig(4, 1, 0.0, (0, 10), n_samples=2000, seed=1)
    assert all(p == 0 for p, _ in outage_mc(cfg))
    cfg = OutageConfig(4, 1, 1e3, (0, 10), n_samples=2000, seed=1)
    assert all(p == 1 for p, _ in outage_mc(cfg))


def test_outage_between_bounds():
    cfg = OutageConfig(4, 1, 4.0, (0, 5, 10, 15, 20, 25), n_samples=50000, seed=5)
    n = cfg.n_samples
    for r in bounds_experiment(cfg):
        # plug-in stderr vanishes at p = 0 or 1; use the null value too
        se_lo = max(r.mc_stderr, math.sqrt(r.lower * (1 - r.lower) / n))
        se_up = max(r.mc_stderr, math.sqrt(r.upper * (1 - r.upper) / n))
        assert r.lower <= r.mc + 3 * se_lo
        assert r.mc <= r.upper + 3 * se_up
        assert 0 <= r.lower <= 1 and 0 <= r.upper <= 1


def test_bounds_branches():
    cfg8 = OutageConfig(8, 1, 2.0, (10,), n_samples=5000, seed=2)
    r = bounds_experiment(cfg8)[0]
    assert r.upper_method == "mc" and r.upper_stderr is not None
    cfg2 = OutageConfig(2, 1, 2.0, (10,), n_samples=5000, seed=2)
    r = bounds_experiment(cfg2)[0]
    assert r.upper == r.lower and r.upper_method == "exact"
    cfg4 = OutageConfig(4, 1, 2.0, (-10, 30), n_samples=5000, seed=2)
    lo, hi = bounds_experiment(cfg4)
    assert lo.k0_approx is None and hi.k0_approx is not None


def test_config_validation():
    with pytest.raises(UsageError):
        OutageConfig(3, 1, 2.0, (0,))
    with pytest.raises(UsageError):
        OutageConfig(4, 1, 2.0, (), n_samples=1000)
    with pytest.raises(UsageError):
        OutageConfig(4, 1, 2.0, (0,), n_samples=10)
    with pytest.raises(UsageError):
        OutageConfig(4, 1, 2.0, (0,), q=1.5)


def test_omi_alamouti_identity():
    cfg = OutageConfig(2, 1, 1.0, (0, 10), n_samples=20000, seed=4)
    for r in outage_mutual_info(cfg, n_boot=10):
        assert r.omi_q == pytest.approx(r.omi_mimo, abs=1e-12)
        assert r.ratio == pytest.approx(1.0)


def test_omi_deterministic_channel():
    h = np.array([[1 + 1j], [0.5], [2j], [-1]])
    mu = eigenvalues_quadratic(h)
    st = {"mu_tilde_sq": np.tile(mu, (500, 1)),
          "gram_eigs": np.full((500, 1), np.sum(np.abs(h) ** 2)),
          "alpha1": np.full(500, np.sum(np.abs(h) ** 2))}
    cfg = OutageConfig(4, 1, 1.0, (10,), n_samples=500)
    r = outage_mutual_info(cfg, n_boot=5, stats=st)[0]
    assert r.omi_q == pytest.approx(qstbc_mutual_info(mu, 10.0, 4), abs=1e-12)
    assert r.omi_q_stderr == 0.0


def test_eigen_stats_rayleigh_small():
    rep = eigen_stat_experiment(4, 1, 20000, seed=8)
    assert rep.max_ks < 0.02
    assert rep.max_abs_corr < 0.05


def test_eigen_stats_ricean_small():
    rep = eigen_stat_experiment(4, 2, 20000, seed=9, k_factor=2.0)
    assert rep.max_ks < 0.02
    assert all(v > 0 for v in rep.extras["noncentrality"])


def test_eigen_stats_negative_control():
    good = build_projectors(4).matrices.copy()
    bad = good.copy()
    n = 2
    bad[0][:n, n:] *= -1
    bad[0][n:, :n] *= -1
    rep = eigen_stat_experiment(4, 1, 20000, seed=10,
                                projectors=ProjectorFamily(4, bad))
    assert rep.max_abs_corr > 0.1


def test_ratio_small():
    rep = ratio_distribution_experiment(1, 20000, seed=6)
    assert rep.max_ks < 0.02
    assert rep.extras["median"] == pytest.approx(1.0, rel=0.05)
    assert rep.extras["mass_near_one"] == pytest.approx(
        rep.extras["mass_near_one_exact"], abs=0.02)
