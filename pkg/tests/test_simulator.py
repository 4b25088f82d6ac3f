import math

import numpy as np
import pytest

from rfrisk import InvalidArgumentError, PowerlawTask, make_powerlaw_structure, total_power
from rfrisk.risk import krr_risk, rf_risk
from rfrisk.simulator import (SimConfig, SimulationResult, kernel_dataset_from_structure,
                              rf_coefficients, simulate_krr, simulate_krr_sweep, simulate_rf,
                              simulate_rf_sweep, synthetic_powerlaw_kernel)


def small(m=200, noise=0.3, a=1.5, b=1.5):
    return make_powerlaw_structure(PowerlawTask(a, b), m, tail=False).with_noise(noise)


@pytest.mark.parametrize("seed", range(5))
def test_primal_dual_equivalence(seed):
    rng = np.random.default_rng(seed)
    n, k, m = (int(v) for v in rng.integers(2, 51, size=3))
    z = rng.standard_normal((n, m)) * np.arange(1, m + 1) ** -0.75
    w = rng.standard_normal((k, m))
    y = rng.standard_normal(n)
    ridge = 10 ** rng.uniform(-3, 1)
    a_p = rf_coefficients(z, w, y, ridge, "primal")
    a_d = rf_coefficients(z, w, y, ridge, "dual")
    psi = w @ z.T / math.sqrt(k)
    np.testing.assert_allclose(psi.T @ a_p, psi.T @ a_d, rtol=0, atol=1e-8)
    with pytest.raises(InvalidArgumentError):
        rf_coefficients(z, w, y, ridge, "other")


def test_seed_determinism():
    cfg = SimConfig(small(), 30, 60, 1e-2, trials=4, seed=11)
    a, b = simulate_rf(cfg), simulate_rf(cfg)
    assert a.test_mse.tobytes() == b.test_mse.tobytes()
    assert a.train_mse.tobytes() == b.train_mse.tobytes()
    c = simulate_rf(cfg, workers=2)
    assert a.test_mse.tobytes() == c.test_mse.tobytes()
    d = simulate_rf(SimConfig(small(), 30, 60, 1e-2, trials=4, seed=12))
    assert not np.array_equal(a.test_mse, d.test_mse)


def test_single_point_matches_sweep():
    ts = small()
    sweep = simulate_rf_sweep(ts, 30, [20, 60, 700], [1e-3, 1.0], trials=3, seed=5)
    one = simulate_rf(SimConfig(ts, 30, 60, 1.0, trials=3, seed=5))
    np.testing.assert_allclose(one.test_mse, sweep[(60, 1.0)].test_mse, rtol=1e-12)
    np.testing.assert_allclose(one.train_mse, sweep[(60, 1.0)].train_mse, rtol=1e-12)


def test_dataset_fixed_across_k():
    ts = small(noise=0.0)
    res = simulate_rf_sweep(ts, 20, [200, 400], [1e10], trials=2, seed=1)
    # at infinite ridge the train MSE is the mean square label, independent of k
    np.testing.assert_allclose(res[(200, 1e10)].train_mse, res[(400, 1e10)].train_mse, rtol=1e-6)
    free = simulate_rf_sweep(ts, 20, [200, 400], [1e10], trials=2, seed=1, fix_dataset_across_k=False)
    assert not np.allclose(free[(200, 1e10)].train_mse, free[(400, 1e10)].train_mse, rtol=1e-3)


def test_interpolation_at_zero_ridge():
    res = simulate_rf(SimConfig(small(), 20, 80, 0.0, trials=3, seed=2))
    assert np.all(res.train_mse >= 0)
    assert np.all(res.train_mse <= 1e-8 * res.test_mse)
    krr = simulate_krr(small(), 20, 0.0, trials=3, seed=2)
    assert np.all(krr.train_mse <= 1e-8 * krr.test_mse)


def test_rank_deficient_zero_ridge_uses_pinv():
    ts = small(m=10)
    with pytest.warns(UserWarning, match="pseudo-inverse"):
        res = simulate_krr(ts, 20, 0.0, trials=2, seed=0)
    assert res.pinv_trials == (0, 1)


def test_infinite_ridge():
    ts = small()
    res = simulate_rf(SimConfig(ts, 30, 50, 1e12, trials=3, seed=0))
    np.testing.assert_allclose(res.test_mse, total_power(ts), rtol=1e-8)
    k = simulate_krr(ts, 30, 1e12, trials=3, seed=0)
    np.testing.assert_allclose(k.test_mse, total_power(ts), rtol=1e-8)


def test_large_k_rf_matches_krr():
    ts = small(m=300)
    n = 16
    rf = simulate_rf(SimConfig(ts, n, 64 * n, 1e-2, trials=30, seed=3))
    kr = simulate_krr(ts, n, 1e-2, trials=30, seed=3)
    # same datasets; only the feature noise differs
    assert abs(rf.test_mean - kr.test_mean) <= 3 * math.hypot(rf.test_se, kr.test_se)


def test_rf_matches_theory_small():
    ts = small(m=500)
    res = simulate_rf_sweep(ts, 40, [10, 40, 160], [1e-2, 1.0], trials=40, seed=9)
    for (k, d), r in res.items():
        pred = rf_risk(ts, 40, k, d)
        assert abs(r.test_mean - pred.e_test) <= 4 * r.test_se
        assert abs(r.train_mean - pred.e_train) <= 4 * r.train_se


def test_krr_sweep_matches_theory():
    ts = small(m=500)
    res = simulate_krr_sweep(ts, 40, [1e-3, 1e-1, 10.0], trials=40, seed=4)
    for d, r in res.items():
        pred = krr_risk(ts, 40, d)
        assert abs(r.test_mean - pred.e_test) <= 4 * r.test_se


def test_krr_learning_curve_slope_full_spectrum_theory():
    # the untruncated powerlaw task decays as n^-(beta-1)
    ts = make_powerlaw_structure(PowerlawTask(2.0, 1.5), 1000)
    ns = 2.0 ** np.arange(6, 13)
    e = [krr_risk(ts, n, 0.0).e_test for n in ns]
    assert np.polyfit(np.log(ns), np.log(e), 1)[0] == pytest.approx(-0.5, abs=0.05)


@pytest.mark.slow
def test_krr_learning_curve_slope_simulated():
    # an M-mode simulation follows the slope of its own truncated task
    ts = make_powerlaw_structure(PowerlawTask(2.0, 1.5), 8192, tail=False)
    ns = [2**p for p in range(6, 12)]
    sim = [simulate_krr(ts, n, 0.0, trials=6, seed=n).test_mean for n in ns]
    theory = [krr_risk(ts, n, 0.0).e_test for n in ns]
    s_sim = np.polyfit(np.log(ns), np.log(sim), 1)[0]
    s_th = np.polyfit(np.log(ns), np.log(theory), 1)[0]
    assert s_sim == pytest.approx(s_th, abs=0.05)


def test_result_statistics_and_rows():
    r = SimulationResult(10, 20, 0.1, 3, np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 6.0]))
    assert r.trials == 3 and r.test_mean == 4.0 and r.train_mean == 2.0
    assert r.test_se == pytest.approx(2 / math.sqrt(3))
    rows = r.csv_rows()
    assert rows[1] == (10, 20, 0.1, 1, 3, 2.0, 4.0)
    assert r.to_dict()["test_mean"] == 4.0
    one = SimulationResult(10, None, 0.1, 0, np.array([1.0]), np.array([1.0]))
    assert math.isnan(one.test_se) and one.csv_rows()[0][1] == "inf"


def test_config_validation_and_round_trip():
    with pytest.raises(InvalidArgumentError):
        SimConfig(make_powerlaw_structure(PowerlawTask(1.5, 1.5), 10), 10, 10, 1.0)
    with pytest.raises(InvalidArgumentError):
        SimConfig(small(), 0, 10, 1.0)
    with pytest.raises(InvalidArgumentError):
        SimConfig(small(), 10, 10, -1.0)
    cfg = SimConfig(small(), 10, 20, 0.5, trials=3, seed=7)
    back = SimConfig.from_dict(cfg.to_dict())
    assert back.n == 10 and back.seed == 7 and back.trials == 3
    with pytest.raises(InvalidArgumentError):
        simulate_rf_sweep(small(), 10, [], [1.0])
    with pytest.raises(InvalidArgumentError):
        simulate_rf_sweep(small(), 10, [20, 10], [1.0])


def test_kernel_from_structure():
    ts = small(m=50, noise=0.0)
    ds = kernel_dataset_from_structure(ts, 40, seed=1)
    assert ds.K.shape == (40, 40) and ds.Y.shape == (40, 1)
    assert np.mean(np.diag(ds.K)) == pytest.approx(ts.eigenvalues.sum(), rel=0.2)


def test_synthetic_kernel_moments():
    task = PowerlawTask(1.5, 1.5)
    ds = synthetic_powerlaw_kernel(task, 200, 10**5, seed=0)
    i = np.arange(1, 10**5 + 1.0)
    # E K_jj = sum lam, E y^2 = sum v^2
    assert np.mean(np.diag(ds.K)) == pytest.approx(np.sum(i ** -1.5), rel=0.1)
    assert np.mean(ds.Y ** 2) == pytest.approx(np.sum(i ** -1.5), rel=0.3)
    a = synthetic_powerlaw_kernel(task, 50, 10**4, seed=3)
    b = synthetic_powerlaw_kernel(task, 50, 10**4, seed=3)
    assert np.array_equal(a.K, b.K)
