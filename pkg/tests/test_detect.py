import numpy as np
import pytest

from qstbc.channel import NoiseModel, synthesize_receive
from qstbc.codec import (SymbolVector, build_transmit_matrix, interleave_halves,
                         precode, psk_constellation)
from qstbc.detect import (MAX_CANDIDATES, ber_experiment, detect_linear,
                          equivalence_experiment, joint_ml, linear_ml,
                          receive_pipeline)
from qstbc.eigen import build_eigenvectors, eigenvalues_recursive
from qstbc.errors import DegenerateChannelError, UsageError
from qstbc.channel import alphas

from conftest import crandn

QPSK = psk_constellation(4)
BPSK = psk_constellation(2)


def _block(rng, n_t, n_r, c, snr=np.inf):
    n = n_t // 2
    idx = rng.integers(c.order, size=n_t)
    s = SymbolVector(c.points[idx[:n]], c.points[idx[n:]])
    x = precode(s, build_eigenvectors(n))
    h = crandn(rng, n_t, n_r)
    y = synthesize_receive(build_transmit_matrix(n_t, x.x), h,
                           NoiseModel(snr, n_t), rng)
    return y, h, s, idx


@pytest.mark.parametrize("n_t", [4, 8, 16])
def test_noiseless_pipeline_is_exact(n_t, rng):
    for _ in range(50):
        y, h, s, _ = _block(rng, n_t, 2, QPSK)
        yo, ye, do, de = receive_pipeline(y, h)
        assert np.allclose(yo, do * s.s_minus, atol=1e-10)
        assert np.allclose(ye, de * s.s_plus, atol=1e-10)
        r = detect_linear(y, h, QPSK)
        assert np.array_equal(r.s_hat_minus, s.s_minus)
        assert np.array_equal(r.s_hat_plus, s.s_plus)


def test_alamouti_reduction(rng):
    y, h, s, _ = _block(rng, 2, 1, QPSK)
    yo, ye, do, de = receive_pipeline(y, h)
    a1 = np.sum(np.abs(h) ** 2)
    assert np.allclose(do, np.sqrt(a1)) and np.allclose(de, np.sqrt(a1))
    assert np.allclose(yo, np.sqrt(a1) * s.s_minus, atol=1e-12)


def test_pipeline_noise_is_white(rng):
    # s = 0: yhat is whitened noise with covariance sigma^2 I
    n_t, n_r, snr, n = 4, 2, 2.0, 100000
    h = crandn(rng, n_t, n_r)
    y = synthesize_receive(np.zeros((n, n_t, n_t)), h, NoiseModel(snr, n_t), rng)
    yo, ye, _, _ = receive_pipeline(y, np.broadcast_to(h, (n, n_t, n_r)))
    sigma2 = n_t / snr
    for w in (yo, ye):
        cov = w.T @ w.conj() / n
        assert np.allclose(cov, sigma2 * np.eye(2), atol=0.03 * sigma2)


def test_linear_ml_examples():
    r = linear_ml(np.array([0.9 + 0.1j]), np.array([1.0]), QPSK)
    assert r.symbols[0] == 1
    yhat = np.array([0.3 - 2j, -1.1 + 0.2j])
    d = np.array([2.0, 0.5])
    base = linear_ml(yhat, d, QPSK).indices
    assert np.array_equal(linear_ml(7.5 * yhat, 7.5 * d, QPSK).indices, base)
    with pytest.raises(UsageError):
        linear_ml(yhat, np.array([1.0, 0.0]), QPSK)


def test_linear_ml_tie_goes_low():
    r = linear_ml(np.array([0.0 + 0j]), np.array([1.0]), QPSK)
    assert r.indices[0] == 0


def test_joint_noiseless(rng):
    for n_t, c in ((4, QPSK), (8, BPSK)):
        y, h, s, _ = _block(rng, n_t, 1, c)
        r = joint_ml(y, h, c, n_t)
        assert np.array_equal(r.s_hat_minus, s.s_minus)
        assert np.array_equal(r.s_hat_plus, s.s_plus)
        assert r.metric == pytest.approx(0.0, abs=1e-10)
    y, h, s, _ = _block(rng, 4, 1, QPSK)
    u = joint_ml(y, h, QPSK, 4, split=False)
    assert u.method == "joint-unsplit"
    assert np.array_equal(u.s_hat_minus, s.s_minus)


def test_frobenius_metric_splits(rng):
    # ||Y - G(xo + xe)H||^2 = ||Y - G(xo)H||^2 + ||Y - G(xe)H||^2 - ||Y||^2
    for n_t in (4, 8):
        y = crandn(rng, n_t, 2)
        h = crandn(rng, n_t, 2)
        xo = interleave_halves(crandn(rng, n_t // 2), np.zeros(n_t // 2))

        def m(x):
            return np.sum(np.abs(y - build_transmit_matrix(n_t, x) @ h) ** 2)

        odd_parts = []
        for _ in range(5):
            xe = interleave_halves(np.zeros(n_t // 2), crandn(rng, n_t // 2))
            odd_parts.append(m(xo + xe) - m(xe) + np.sum(np.abs(y) ** 2))
            assert odd_parts[-1] == pytest.approx(m(xo), abs=1e-10)
        assert np.ptp(odd_parts) < 1e-10


def test_joint_split_metric_matches_unsplit(rng):
    y, h, _, _ = _block(rng, 4, 2, QPSK, snr=3.0)
    a = joint_ml(y, h, QPSK, 4)
    b = joint_ml(y, h, QPSK, 4, split=False)
    assert a.metric == pytest.approx(b.metric, abs=1e-9)


def test_joint_candidate_limit():
    c = psk_constellation(64)
    with pytest.raises(UsageError):
        joint_ml(np.zeros((16, 1)), np.ones((16, 1)), c, 16)
    assert 64 ** 8 > MAX_CANDIDATES


def test_degenerate_propagates():
    h = np.zeros((4, 1), dtype=complex)
    with pytest.raises(DegenerateChannelError):
        receive_pipeline(np.zeros((4, 1)), h)


def test_pipeline_shape_check():
    with pytest.raises(UsageError):
        receive_pipeline(np.zeros((2, 1)), np.ones((4, 1)))


def test_equivalence_small():
    recs = equivalence_experiment(4, 1, QPSK, [0, 10], 60, seed=3, unsplit=True)
    assert [r.mismatches for r in recs] == [0, 0]
    assert [r.unsplit_mismatches for r in recs] == [0, 0]
    assert recs[0].unsplit_checked == 60


def test_ber_limits():
    recs = ber_experiment(4, 1, QPSK, [-40, 60], 10000, seed=1)
    assert recs[0].ber == pytest.approx(0.5, abs=0.02)
    assert recs[1].ber < 1e-4
    assert recs[0].n_bits == 10000 * 8


def test_ber_monotone_and_joint_check():
    grid = [0, 4, 8, 12, 16]
    recs = ber_experiment(4, 2, QPSK, grid, 3000, seed=2, joint_check=2)
    for a, b in zip(recs, recs[1:]):
        assert b.ber <= a.ber + 3 * np.hypot(a.stderr, b.stderr)
    assert all(r.joint_mismatches == 0 for r in recs)
    assert recs[0].joint_checked == 2


def test_ber_rejects_empty():
    with pytest.raises(UsageError):
        ber_experiment(4, 1, QPSK, [0], 0, seed=0)


def test_d_matches_recursion(rng):
    y, h, _, _ = _block(rng, 8, 1, BPSK)
    _, _, do, _ = receive_pipeline(y, h)
    assert np.allclose(do ** 2, eigenvalues_recursive(alphas(h)), atol=1e-12)
