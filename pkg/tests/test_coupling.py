import math

import numpy as np
import pytest
from scipy import stats

from kacsim import (
    ConfigError,
    CoupledPair,
    DomainError,
    SimConfig,
    State,
    W_p,
    bar_d_p_squared,
    couple_pair,
    couple_simulate,
    d_p,
    sample_initial,
    simulate,
)
from kacsim.coupling import couple_scan, log_log_fit


def test_bar_d_examples():
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    a = State(np.array([e1, -e1]))
    b = State(np.array([e2, -e2]))
    assert bar_d_p_squared(CoupledPair(a, b, 1.0, 2.0, p=0.0)) == pytest.approx(3.0 * 2.0)
    # the p = 0 convention multiplies by 3; the Euclidean part is 2
    assert bar_d_p_squared(a, b, p=0.0) / 3.0 == pytest.approx(2.0)
    assert bar_d_p_squared(a, a, p=8.0) == 0.0
    with pytest.raises(DomainError):
        bar_d_p_squared(a.velocities, b.velocities[:1], p=1.0)


def test_pair_validation():
    s = sample_initial("gaussian", 8, 3, 0)
    with pytest.raises(ConfigError):
        CoupledPair(s, s, K=4.0, K_prime=2.0)


def test_self_coupling_identical(spec, table):
    s = sample_initial("gaussian", 64, 3, 1)
    tr = couple_pair(CoupledPair(s, s, 32.0, 32.0), spec, table, 0.5, seed=3)
    assert tr.n_fine == tr.n_coarse[0] > 0
    assert np.array_equal(tr.fine.velocities, tr.coarse[0].velocities)
    assert np.all(tr.bar_d == 0.0)


def test_frozen_coarse(spec, table):
    s = sample_initial("gaussian", 32, 3, 2)
    tr = couple_simulate(s, s, spec, table, 16.0, [0.0], 0.3, seed=1)
    assert tr.n_coarse[0] == 0
    assert np.array_equal(tr.coarse[0].velocities, s.velocities)
    expected = np.mean(d_p(tr.fine.velocities, s.velocities, 8.0) ** 2)
    assert tr.bar_d[0, -1] == pytest.approx(expected, rel=1e-14)


def test_W_p_below_coupled_distance(spec, table):
    s = sample_initial("gaussian", 24, 3, 3)
    tr = couple_simulate(s, [s, s], spec, table, 256.0, [4.0, 16.0], 0.5, seed=5, p=4.0, record="states")
    for V, Vc in zip(tr.fine_snapshots, tr.coarse_snapshots):
        for m in range(2):
            assert W_p(V, Vc[m], 4.0) ** 2 <= bar_d_p_squared(V, Vc[m], 4.0) * (1 + 1e-12) + 1e-15


def test_fine_marginal_law(spec, table):
    # accepted counts of the fine marginal vs an independent single process at K'
    s = sample_initial("gaussian", 16, 3, 4)
    Kp, T = 64.0, 0.2
    coupled = [couple_simulate(s, s, spec, table, Kp, [4.0], T, seed=7, replica=r).n_fine for r in range(60)]
    single = [simulate(s, spec, table, SimConfig(K=Kp, t_final=T, seed=8, replica=r)).n_accepted for r in range(60)]
    assert stats.ks_2samp(coupled, single).pvalue > 1e-3


def test_coarse_marginal_law(spec, table):
    s = sample_initial("gaussian", 16, 3, 4)
    K, T = 8.0, 0.5
    coupled = [couple_simulate(s, s, spec, table, 128.0, [K], T, seed=9, replica=r).coarse[0] for r in range(60)]
    single = [simulate(s, spec, table, SimConfig(K=K, t_final=T, seed=10, replica=r)).final for r in range(60)]
    m4c = [np.mean(np.sum(c.velocities**2, 1) ** 2) for c in coupled]
    m4s = [np.mean(np.sum(c.velocities**2, 1) ** 2) for c in single]
    assert stats.ks_2samp(m4c, m4s).pvalue > 1e-3


def test_rotated_azimuth_centred(spec, table):
    s = sample_initial("gaussian", 32, 3, 6)
    tr = couple_simulate(s, s, spec, table, 64.0, [16.0], 1.0, seed=2)
    n = tr.n_coarse[0]
    # mean of n uniform unit vectors in R^2 has per-coordinate sd 1/sqrt(2n)
    assert np.all(np.abs(tr.coarse_azimuth_mean[0]) < 4.0 / math.sqrt(2 * n))


def test_log_log_fit():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    r = log_log_fit(x, 3.0 * x**-1.5)
    assert r.slope == pytest.approx(-1.5)
    assert r.intercept == pytest.approx(math.log(3.0))
    assert r.stderr == pytest.approx(0.0, abs=1e-12)
    assert r.n_points == 4


def test_small_scan_monotone(spec, table):
    res = couple_scan(spec, table, [2.0, 8.0, 32.0], K_prime=128.0, t_final=0.2, n=16, replicas=6, seed=1)
    assert res.bar_d.shape == (6, 3)
    assert res.mean[0] > res.mean[-1]
    assert res.regression.slope < 0
    assert len(res.rows) == 6 * 3 * 65
