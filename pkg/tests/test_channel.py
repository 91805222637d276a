import io
import math

import numpy as np
import pytest

from sucre_xl.channel import (
    CorrelationSpec,
    correlation_factor,
    correlation_matrix,
    sample_channel,
    sample_channels,
    write_channel_csv,
)
from sucre_xl.config import ScenarioConfig
from sucre_xl.geometry import UserRecord


def make_user(beta, theta=None, uid=0):
    beta = np.asarray(beta, dtype=float)
    theta = np.zeros(beta.size) if theta is None else np.asarray(theta, dtype=float)
    return UserRecord(uid, np.zeros(2), 0.0, beta, beta > 0, theta)


def test_correlation_matrix_structure():
    for theta in (0.0, 0.3, -1.2, math.pi / 4):
        R = correlation_matrix(theta, 0.7, 6)
        assert np.all(np.diag(R) == 1.0)
    assert correlation_matrix(0.0, 0.7, 4)[0, 1] == pytest.approx(0.7)
    assert correlation_matrix(0.0, 0.7, 4)[1, 0] == pytest.approx(0.7)


def test_correlation_matrix_hermitian_psd():
    R = correlation_matrix(math.pi / 4, 0.7, 3)
    np.testing.assert_array_equal(R, R.conj().T)
    assert np.linalg.eigvalsh(R).min() >= -1e-10
    for M_b in (1, 8, 64):
        R = correlation_matrix(0.9, 0.5, M_b)
        assert np.linalg.eigvalsh(R).min() >= -1e-10


def test_correlation_matrix_rejects_bad_index():
    for r in (0.0, 1.0, 1.5, -0.2):
        with pytest.raises(ValueError):
            correlation_matrix(0.0, r, 4)


def test_factor_reproduces_matrix():
    for theta, r, M_b in [(0.4, 0.7, 10), (-1.0, 0.2, 33), (2.0, 0.95, 5)]:
        L = correlation_factor(theta, r, M_b)
        np.testing.assert_allclose(L @ L.conj().T, correlation_matrix(theta, r, M_b), atol=1e-12)


def test_iid_entry_variance_matches_beta(rng):
    cfg = ScenarioConfig(M=4, B=1)
    user = make_user([3e-9])
    n = 100_000
    draws = np.array([sample_channel(user, CorrelationSpec(), cfg, rng)[0, 0] for _ in range(n)])
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(3e-9, rel=0.02)
    # zero mean within Monte Carlo error
    assert abs(draws.mean()) < 4 * math.sqrt(3e-9 / n)


def test_invisible_subarray_is_exactly_zero(rng):
    cfg = ScenarioConfig(M=12, B=3)
    user = make_user([1e-9, 0.0, 2e-9], theta=[0.1, 0.2, 0.3])
    for spec in (CorrelationSpec(), CorrelationSpec("exponential", 0.7)):
        h = sample_channel(user, spec, cfg, rng)
        assert h.shape == (3, 4)
        assert np.all(h[1] == 0)
        assert np.all(h[[0, 2]] != 0)


def test_exponential_lag_one_correlation(rng):
    theta, r, beta = 0.6, 0.7, 2.0
    cfg = ScenarioConfig(M=8, B=1, r=r)
    user = make_user([beta], theta=[theta])
    spec = CorrelationSpec("exponential", r)
    n = 100_000
    H = np.array([sample_channel(user, spec, cfg, rng)[0] for _ in range(n)])
    est = np.mean(H[:, 2] * H[:, 3].conj()) / beta
    # var(h_i conj(h_{i+1})) / beta^2 = 1 for unit-variance CN pairs
    assert abs(est - r * np.exp(1j * theta)) < 3 / math.sqrt(n)
    assert np.mean(np.abs(H) ** 2) / beta == pytest.approx(1.0, rel=0.02)


def test_iid_and_exponential_share_random_numbers():
    cfg = ScenarioConfig(M=10, B=2)
    user = make_user([1.0, 1.0], theta=[0.0, 0.0])
    a = sample_channel(user, CorrelationSpec(), cfg, np.random.default_rng(3))
    b = sample_channel(user, CorrelationSpec("exponential", 0.7), cfg, np.random.default_rng(3))
    # first antenna of a KMS Cholesky factor has L[0, 0] = 1
    np.testing.assert_allclose(a[:, 0], b[:, 0], atol=1e-15)
    assert not np.allclose(a, b)


@pytest.mark.parametrize("mode", ["iid", "exponential"])
def test_channel_hardening_rate(rng, mode):
    spreads = []
    grid = (8, 64, 512)
    for M_b in grid:
        cfg = ScenarioConfig(M=M_b, B=1)
        user = make_user([5e-10], theta=[0.3])
        spec = CorrelationSpec(mode, 0.7)
        g = np.array(
            [np.sum(np.abs(sample_channel(user, spec, cfg, rng)) ** 2) / M_b / 5e-10 for _ in range(2000)]
        )
        spreads.append(g.std())
    # std of ||h||^2 / (M_b beta) shrinks like 1/sqrt(M_b) (correlation only changes the constant)
    for (m1, s1), (m2, s2) in zip(zip(grid, spreads), zip(grid[1:], spreads[1:])):
        expected = math.sqrt(m2 / m1)
        assert expected / 1.5 < s1 / s2 < expected * 1.5
    if mode == "iid":
        for M_b, s in zip(grid, spreads):
            assert s * math.sqrt(M_b) == pytest.approx(1.0, rel=0.15)


def test_favorable_propagation_rate(rng):
    grid = (8, 64, 512)
    rms = []
    for M_b in grid:
        cfg = ScenarioConfig(M=M_b, B=1)
        ui, uj = make_user([2.0], uid=0), make_user([0.5], uid=1)
        vals = []
        for _ in range(2000):
            hi = sample_channel(ui, CorrelationSpec(), cfg, rng)[0]
            hj = sample_channel(uj, CorrelationSpec(), cfg, rng)[0]
            vals.append(abs(np.vdot(hi, hj)) / M_b)
        rms.append(math.sqrt(np.mean(np.square(vals))))
    for M_b, v in zip(grid, rms):
        # E|h_i^H h_j|^2 = M_b * beta_i * beta_j
        assert v * math.sqrt(M_b) == pytest.approx(1.0, rel=0.1)


def test_sum_hardening_over_visible_subarrays(rng):
    beta = np.array([1e-9, 0.0, 3e-9, 5e-10])
    errs = []
    for M_b in (8, 128):
        cfg = ScenarioConfig(M=4 * M_b, B=4)
        user = make_user(beta, theta=[0.1, 0.2, 0.3, 0.4])
        gains = [
            np.sum(np.abs(sample_channel(user, CorrelationSpec(), cfg, rng)) ** 2) / M_b for _ in range(2000)
        ]
        errs.append(np.mean(np.abs(np.array(gains) - beta.sum())) / beta.sum())
        assert np.mean(gains) == pytest.approx(beta.sum(), rel=0.05)
    assert errs[1] < errs[0] / 2


def test_sample_channels_keys_and_csv(rng):
    cfg = ScenarioConfig(M=4, B=2)
    users = [make_user([1.0, 0.0], uid=7), make_user([0.0, 2.0], uid=3)]
    real = sample_channels(users, CorrelationSpec(), cfg, rng)
    assert sorted(real) == [3, 7]
    buf = io.StringIO()
    write_channel_csv(real, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "user,subarray,antenna,re,im"
    assert len(rows) == 1 + 2 * 4
    first = rows[1].split(",")
    assert first[:3] == ["3", "0", "0"] and float(first[3]) == 0.0 and float(first[4]) == 0.0


def test_spec_from_config():
    assert CorrelationSpec.from_config(ScenarioConfig(channel="correlated", r=0.4)) == CorrelationSpec("exponential", 0.4)
    assert CorrelationSpec.from_config(ScenarioConfig()).mode == "iid"
    with pytest.raises(ValueError):
        CorrelationSpec("exponential", 1.2)
