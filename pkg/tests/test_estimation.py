import json

import numpy as np
import pytest

from rfrisk import InvalidArgumentError, PowerlawTask, SingularMatrixError, make_powerlaw_structure
from rfrisk import estimation as est
from rfrisk.simulator import kernel_dataset_from_structure, synthetic_powerlaw_kernel


@pytest.fixture(scope="module")
def exact_ds():
    ts = make_powerlaw_structure(PowerlawTask(1.5, 2.5), 20000, tail=False)
    return kernel_dataset_from_structure(ts, 1000, seed=0)


def test_proxy_identity_and_diagonal():
    assert est.kappa_proxy(np.eye(7)) == pytest.approx(1 / 7, rel=1e-15)
    lam = np.array([3.0, 1.0, 0.5, 0.01])
    assert est.kappa_proxy(np.diag(lam)) == pytest.approx(1 / np.sum(1 / lam), rel=1e-13)


def test_proxy_stabilization():
    v = np.array([[1.0, 1.0, 0.0]]).T
    K = v @ v.T + np.diag([0.0, 0.0, 1.0])  # rank 2
    with pytest.warns(est.StabilizedWarning):
        val = est.kappa_proxy(K)
    assert 0 < val < 1e-10
    with pytest.raises(SingularMatrixError), pytest.warns(est.StabilizedWarning):
        est.kappa_proxy(np.zeros((3, 3)))


def test_proxy_decreasing_in_n(exact_ds):
    rng = np.random.default_rng(0)
    sizes = [50, 100, 200, 400, 800]
    med = []
    for n in sizes:
        vals = []
        for _ in range(7):
            idx = rng.choice(exact_ds.N, n, replace=False)
            vals.append(est.kappa_proxy(exact_ds.K[np.ix_(idx, idx)]))
        med.append(np.median(vals))
    assert np.all(np.diff(med) <= 0)


def test_measure_alpha_exact_task(exact_ds):
    fit = est.measure_alpha(exact_ds)
    assert fit.exponent == pytest.approx(1.5, rel=0.05)
    assert fit.x.size == fit.y.size and fit.window[0] < fit.window[1] <= fit.x.size
    json.dumps(fit.to_dict())


def test_measure_alpha_flat_spectrum_flagged():
    ds = est.KernelDataset(2.0 * np.eye(300), np.ones(300))
    fit = est.measure_alpha(ds)
    assert fit.slope == pytest.approx(-1.0, abs=1e-10)
    assert "unit_slope_artifact" in fit.flags


def test_too_few_sizes():
    ds = est.KernelDataset(np.eye(10), np.ones(10))
    with pytest.raises(InvalidArgumentError):
        est.measure_alpha(ds, sizes=[2, 4])
    with pytest.raises(InvalidArgumentError):
        est.measure_alpha(ds, sizes=[2, 4, 20])
    with pytest.raises(InvalidArgumentError):
        est.measure_alpha(ds, sizes=[4, 3, 5])


def test_measure_beta_realizable(exact_ds):
    fit = est.measure_beta(exact_ds)
    assert fit.slope == pytest.approx(-1.5, abs=0.15)
    assert fit.exponent == pytest.approx(2.5, abs=0.15)


def test_measure_beta_pure_noise(exact_ds):
    y = np.random.default_rng(1).standard_normal(exact_ds.N)
    fit = est.measure_beta(est.KernelDataset(exact_ds.K, y))
    assert abs(fit.slope) < 0.1
    assert "no_powerlaw" in fit.flags


def test_measure_beta_held_out_validation(exact_ds):
    with pytest.raises(InvalidArgumentError):
        est.measure_beta(exact_ds, held_out=exact_ds.N)


def test_direct_diagonal_exact():
    d = np.array([5.0, 1.0, 3.0, 0.5])
    y = np.array([[1.0, 0.0], [2.0, 1.0], [0.0, 1.0], [1.0, 1.0]])
    out = est.direct_eigenstructure(est.KernelDataset(np.diag(d), y))
    np.testing.assert_allclose(out.eigenvalues, np.sort(d)[::-1] / 4, rtol=1e-14)
    np.testing.assert_allclose(out.coeffs_sq.sum(axis=0), (y ** 2).sum(axis=0) / 4, rtol=1e-14)
    np.testing.assert_allclose(out.tailsums[0], out.coeffs_sq.sum(axis=0), rtol=1e-14)
    assert np.all(np.diff(out.tailsums, axis=0) <= 0)


def test_direct_normalization(exact_ds):
    out = est.direct_eigenstructure(exact_ds)
    assert out.eigenvalues.sum() == pytest.approx(np.trace(exact_ds.K) / exact_ds.N, rel=1e-10)
    assert out.coeffs_sq.sum() == pytest.approx(np.sum(exact_ds.Y ** 2) / exact_ds.N, rel=1e-10)


def test_lad_fit_resists_outlier():
    x = np.arange(1, 41, dtype=float)
    y = 3.0 * x ** -1.2
    y[25] *= 50
    lsq = est.loglog_fit(x, y, (0.0, 1.0))[0]
    lad = est.loglog_fit(x, y, (0.0, 1.0), loss="lad")[0]
    assert abs(lad + 1.2) < 1e-3 < abs(lsq + 1.2)
    with pytest.raises(InvalidArgumentError):
        est.loglog_fit(x, y, (0.5, 0.2))


def test_dataset_validation():
    with pytest.raises(InvalidArgumentError):
        est.KernelDataset(np.array([[1.0, 0.5], [0.4, 1.0]]), np.ones(2))
    with pytest.raises(InvalidArgumentError):
        est.KernelDataset(np.eye(3), np.ones(2))
    ds = est.KernelDataset(np.eye(3), np.ones(3), "x")
    assert ds.metadata == {"name": "x", "N": 3, "C": 1}


def test_binary_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    ds = est.KernelDataset(a @ a.T, rng.standard_normal((6, 2)), "demo")
    path = tmp_path / "k.bin"
    est.save_kernel_file(ds, path)
    header = json.loads(path.read_bytes().split(b"\n", 1)[0])
    assert header == {"name": "demo", "N": 6, "C": 2, "dtype": "f64", "layout": "row-major"}
    back = est.load_kernel_file(path)
    assert np.array_equal(back.K, ds.K) and np.array_equal(back.Y, ds.Y) and back.name == "demo"
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InvalidArgumentError):
        est.load_kernel_file(path)
    (tmp_path / "bad.bin").write_bytes(b"not json\n")
    with pytest.raises(InvalidArgumentError):
        est.load_kernel_file(tmp_path / "bad.bin")


def test_csv_ingestion(tmp_path):
    K = np.array([[2.0, 1.0], [1.0, 3.0]])
    path = tmp_path / "k.csv"
    np.savetxt(path, np.hstack([K, [[1.0], [2.0]]]), delimiter=",")
    ds = est.load_kernel_file(path)
    assert np.array_equal(ds.K, K) and ds.Y[:, 0].tolist() == [1.0, 2.0]
    np.savetxt(path, K, delimiter=",")
    with pytest.raises(InvalidArgumentError):
        est.load_kernel_csv(path)


@pytest.mark.slow
def test_proxy_beats_direct_for_both_exponents():
    ds = synthetic_powerlaw_kernel(PowerlawTask(1.1, 1.3), 2000, 3 * 10**6, seed=1)
    fa, fb = est.measure_alpha(ds), est.measure_beta(ds)
    da, db = est.direct_exponents(ds)
    assert abs(fa.exponent - 1.1) < abs(da.exponent - 1.1)
    assert abs(fb.exponent - 1.3) < abs(db.exponent - 1.3)
