"""Monte Carlo RF regression and KRR on Gaussian latent data.

Latent inputs ``x ~ N(0, I_M)`` carry the task exactly: the kernel is
``K(x, x') = x^T diag(lam) x'`` and the target is ``v^T x`` with
``v_i = sqrt(coeffs_sq_i)``.  Random features are

    psi(x) = W diag(lam)^(1/2) x,   W_ij ~ N(0, 1/k),

so that ``E_W[psi(x)^T psi(x')] = K(x, x')``.  Fits use the dual form
``f(x) = khat(x, X) (Khat + ridge I_n)^-1 y`` with ``Khat = Psi^T Psi``.  In
the primal this is ``a = (Psi Psi^T + ridge I_k)^-1 Psi y``, or equivalently a
penalty ``ridge * k`` on unit-variance features.  Test error is the exact
population risk ``||diag(lam)^(1/2) W^T a - v||^2 + sigma^2``.

Random streams
--------------
Every trial draws from ``SeedSequence([seed, trial, ...])``.  Rows of ``W``
are generated in fixed chunks from ``SeedSequence([seed, trial, 1, chunk])``,
so the first ``k`` rows are the same for every ``k`` (nested features).  When
the full projection exceeds ``W_CACHE_BYTES`` it is regenerated chunk by
chunk instead of stored.  A ``(k, ridge)`` point simulated alone sees the
same random draws as inside a sweep (results agree up to floating-point
summation order), and identical inputs give bit-identical results however
trials are scheduled across workers.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .errors import InvalidArgumentError
from .spectrum import TaskEigenstructure

W_CHUNK = 512
W_CACHE_BYTES = 1 << 30
_PINV_RTOL = 1e-12


@dataclass(frozen=True)
class SimConfig:
    """One RF simulation point.

    ``fix_dataset_across_k`` keeps the training set (inputs, labels and
    label noise) identical for every feature count of a given trial.
    """

    ts: TaskEigenstructure
    n: int
    k: int
    ridge: float
    trials: int = 45
    seed: int = 0
    fix_dataset_across_k: bool = True

    def __post_init__(self):
        _check_sim_task(self.ts)
        for name in ("n", "k", "trials"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        if not (math.isfinite(self.ridge) and self.ridge >= 0):
            raise InvalidArgumentError(f"ridge must be >= 0, got {self.ridge}")
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {"ts": self.ts.to_dict(), "n": self.n, "k": self.k, "ridge": self.ridge,
                "trials": self.trials, "seed": self.seed,
                "fix_dataset_across_k": self.fix_dataset_across_k}

    @classmethod
    def from_dict(cls, d):
        return cls(TaskEigenstructure.from_dict(d["ts"]), d["n"], d["k"], float(d["ridge"]),
                   d.get("trials", 45), d.get("seed", 0), d.get("fix_dataset_across_k", True))


@dataclass(frozen=True)
class SimulationResult:
    """Per-trial empirical errors of one simulation point.

    ``k`` is None for KRR.  ``pinv_trials`` lists trials where the
    zero-ridge system was rank deficient and solved by pseudo-inverse.
    """

    n: int
    k: object
    ridge: float
    seed: int
    train_mse: np.ndarray
    test_mse: np.ndarray
    pinv_trials: tuple = field(default=())

    @property
    def trials(self) -> int:
        return int(self.test_mse.size)

    @property
    def train_mean(self) -> float:
        return float(np.mean(self.train_mse))

    @property
    def test_mean(self) -> float:
        return float(np.mean(self.test_mse))

    @property
    def train_se(self) -> float:
        return _se(self.train_mse)

    @property
    def test_se(self) -> float:
        return _se(self.test_mse)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "ridge": self.ridge, "seed": self.seed,
                "train_mse": self.train_mse.tolist(), "test_mse": self.test_mse.tolist(),
                "train_mean": self.train_mean, "test_mean": self.test_mean,
                "train_se": self.train_se, "test_se": self.test_se,
                "pinv_trials": list(self.pinv_trials)}

    def csv_rows(self):
        """One ``(n, k, delta, trial, seed, train_mse, test_mse)`` row per trial."""
        k = "inf" if self.k is None else self.k
        return [(self.n, k, self.ridge, t, self.seed, float(a), float(b))
                for t, (a, b) in enumerate(zip(self.train_mse, self.test_mse))]


def _se(x):
    x = np.asarray(x)
    if x.size < 2:
        return math.nan
    return float(np.std(x, ddof=1) / math.sqrt(x.size))


def _check_sim_task(ts):
    if ts.tail is not None:
        raise InvalidArgumentError(
            "simulation needs explicit modes only; build the structure with tail=False")
    if ts.modes < 1:
        raise InvalidArgumentError("simulation needs at least one mode")


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence([int(x) for x in key]))


def _draw_dataset(ts, n, seed, trial, salt=()):
    rng = _rng(seed, trial, 0, *salt)
    x = rng.standard_normal((n, ts.modes))
    v = np.sqrt(ts.coeffs_sq * ts.scale)
    y = x @ v
    if ts.noise_var > 0:
        y = y + math.sqrt(ts.noise_var) * rng.standard_normal(n)
    return x, y, v


def _w_chunk(seed, trial, chunk, rows, modes):
    # unit-variance rows [chunk*W_CHUNK, chunk*W_CHUNK + rows); numpy fills
    # row-major, so a shorter draw is a prefix of a longer one
    return _rng(seed, trial, 1, chunk).standard_normal((rows, modes))


def _dual_solve(evals, evecs, y, ridge, rank_deficient_ok):
    """Dual coefficients and fitted values for every ridge in ``ridge``."""
    uy = evecs.T @ y
    coefs, fits, pinv = [], [], []
    cutoff = _PINV_RTOL * max(float(evals[-1]), 0.0)
    for d in ridge:
        if d == 0:
            keep = evals > cutoff
            inv = np.zeros_like(evals)
            inv[keep] = 1.0 / evals[keep]
            pinv.append(not np.all(keep))
            shrink = keep.astype(float)
        else:
            inv = 1.0 / (evals + d)
            shrink = evals * inv
            pinv.append(False)
        coefs.append(evecs @ (inv * uy))
        fits.append(evecs @ (shrink * uy))
    return coefs, fits, pinv


def _rf_trial(ts, n, ks, ridges, seed, trial, fix_dataset):
    """Train/test MSE arrays of shape (len(ks), len(ridges)) for one trial."""
    lam_sqrt = np.sqrt(ts.eigenvalues)
    modes = ts.modes
    datasets = {}
    # with a fixed dataset every k shares one draw; otherwise each k gets its own
    keys = [()] if fix_dataset else [(k,) for k in ks]
    for key in keys:
        datasets[key] = _draw_dataset(ts, n, seed, trial, key)

    train = np.empty((len(ks), len(ridges)))
    test = np.empty((len(ks), len(ridges)))
    pinv_any = False
    for key, (x, y, v) in datasets.items():
        kk = ks if fix_dataset else [key[0]]
        kmax_key = kk[-1]
        z = x * lam_sqrt  # n x M
        # pass 1: F = Z G^T (n x kmax), G unit variance
        f = np.empty((n, kmax_key))
        cache = [] if kmax_key * modes * 8 <= W_CACHE_BYTES else None
        for c in range(-(-kmax_key // W_CHUNK)):
            r0 = c * W_CHUNK
            r1 = min(r0 + W_CHUNK, kmax_key)
            g = _w_chunk(seed, trial, c, r1 - r0, modes)
            f[:, r0:r1] = z @ g.T
            if cache is not None:
                cache.append(g)
        # Khat_k = F_k F_k^T / k, accumulated over ascending k
        acc = np.zeros((n, n))
        done = 0
        avecs = np.zeros((kmax_key, len(kk) * len(ridges)))
        scales = np.empty(len(kk) * len(ridges))
        col = 0
        for k in kk:
            blk = f[:, done:k]
            acc += blk @ blk.T
            done = k
            khat = acc / k
            evals, evecs = np.linalg.eigh(khat)
            coefs, fits, pinv = _dual_solve(evals, evecs, y, ridges, True)
            pinv_any = pinv_any or any(pinv)
            ik = ks.index(k)
            for j, (c_, fit) in enumerate(zip(coefs, fits)):
                train[ik, j] = float(np.mean((fit - y) ** 2))
                # theta = diag(lam)^(1/2) G_k^T F_k^T c / k
                avecs[:k, col] = f[:, :k].T @ c_
                scales[col] = 1.0 / k
                col += 1
        # pass 2: reuse or regenerate W, accumulate theta for every (k, ridge)
        theta = np.zeros((modes, col))
        for c in range(-(-kmax_key // W_CHUNK)):
            r0 = c * W_CHUNK
            r1 = min(r0 + W_CHUNK, kmax_key)
            g = cache[c] if cache is not None else _w_chunk(seed, trial, c, r1 - r0, modes)
            theta += g.T @ avecs[r0:r1]
        theta *= scales
        theta *= lam_sqrt[:, None]
        err = np.sum((theta - v[:, None]) ** 2, axis=0) + ts.noise_var
        col = 0
        for k in kk:
            ik = ks.index(k)
            for j in range(len(ridges)):
                test[ik, j] = err[col]
                col += 1
    return train, test, pinv_any


def _check_grid(name, vals, integer):
    vals = list(vals)
    if not vals:
        raise InvalidArgumentError(f"{name} grid is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise InvalidArgumentError(f"{name} grid must be strictly increasing")
    if integer:
        if any(int(v) != v or v < 1 for v in vals):
            raise InvalidArgumentError(f"{name} values must be positive integers")
        vals = [int(v) for v in vals]
    elif any(not (math.isfinite(v) and v >= 0) for v in vals):
        raise InvalidArgumentError(f"{name} values must be finite and >= 0")
    return vals


def simulate_rf_sweep(ts, n, ks, ridges, trials=45, seed=0, fix_dataset_across_k=True,
                      workers=1) -> dict:
    """Simulate RF regression over a grid of feature counts and ridges.

    Parameters
    ----------
    ts : TaskEigenstructure
        Explicit modes only (no tail).
    n : int
    ks : sequence of int
        Strictly increasing feature counts.
    ridges : sequence of float
        Strictly increasing ridges.
    workers : int
        Threads used to run trials concurrently; does not change results.

    Returns
    -------
    dict
        ``{(k, ridge): SimulationResult}``.
    """
    _check_sim_task(ts)
    ks = _check_grid("k", ks, True)
    ridges = _check_grid("ridge", ridges, False)
    if int(n) != n or n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    n = int(n)

    def one(t):
        return _rf_trial(ts, n, ks, ridges, seed, t, fix_dataset_across_k)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outs = list(ex.map(one, range(trials)))
    else:
        outs = [one(t) for t in range(trials)]
    train = np.stack([o[0] for o in outs])
    test = np.stack([o[1] for o in outs])
    pinv = tuple(t for t, o in enumerate(outs) if o[2])
    if pinv:
        warnings.warn(f"rank-deficient zero-ridge solves in trials {pinv}; used pseudo-inverse")
    res = {}
    for i, k in enumerate(ks):
        for j, d in enumerate(ridges):
            res[(k, d)] = SimulationResult(n, k, d, int(seed), train[:, i, j].copy(),
                                           test[:, i, j].copy(), pinv)
    return res


def simulate_rf(config: SimConfig, workers=1) -> SimulationResult:
    """Simulate one RF point described by ``config``."""
    out = simulate_rf_sweep(config.ts, config.n, [config.k], [config.ridge], config.trials,
                            config.seed, config.fix_dataset_across_k, workers)
    return out[(config.k, config.ridge)]


def simulate_krr_sweep(ts, n, ridges, trials=45, seed=0, workers=1) -> dict:
    """KRR on the exact kernel ``X diag(lam) X^T``; ``{ridge: SimulationResult}``."""
    _check_sim_task(ts)
    ridges = _check_grid("ridge", ridges, False)
    if int(n) != n or n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    n = int(n)
    lam = ts.eigenvalues

    def one(t):
        x, y, v = _draw_dataset(ts, n, seed, t)
        z = x * np.sqrt(lam)
        evals, evecs = np.linalg.eigh(z @ z.T)
        coefs, fits, pinv = _dual_solve(evals, evecs, y, ridges, True)
        tr = [float(np.mean((fit - y) ** 2)) for fit in fits]
        # linear coefficient on x is diag(lam) X^T c
        theta = lam[:, None] * (x.T @ np.stack(coefs, axis=1))
        te = np.sum((theta - v[:, None]) ** 2, axis=0) + ts.noise_var
        return np.array(tr), te, any(pinv)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outs = list(ex.map(one, range(trials)))
    else:
        outs = [one(t) for t in range(trials)]
    pinv = tuple(t for t, o in enumerate(outs) if o[2])
    if pinv:
        warnings.warn(f"rank-deficient zero-ridge KRR solves in trials {pinv}; used pseudo-inverse")
    return {d: SimulationResult(n, None, d, int(seed), np.array([o[0][j] for o in outs]),
                                np.array([o[1][j] for o in outs]), pinv)
            for j, d in enumerate(ridges)}


def simulate_krr(ts, n, ridge, trials=45, seed=0, workers=1) -> SimulationResult:
    """Simulate KRR at one ridge."""
    return simulate_krr_sweep(ts, n, [ridge], trials, seed, workers)[float(ridge)]


def rf_coefficients(z, w, y, ridge, form="dual"):
    """Primal RF weights for latent-scaled inputs ``z = X diag(lam)^(1/2)``.

    ``w`` holds unit-variance projection rows (k x M); features are
    ``Psi = w z^T / sqrt(k)``.  ``form="primal"`` solves
    ``(Psi' Psi'^T + ridge k I) a = Psi' y`` with unscaled features
    ``Psi' = w z^T`` and maps the result to the scaled features; ``"dual"``
    solves the n x n system.  Both return weights on the scaled features.
    """
    k = w.shape[0]
    if form == "primal":
        psi_u = w @ z.T
        a = np.linalg.solve(psi_u @ psi_u.T + ridge * k * np.eye(k), psi_u @ y)
        return a * math.sqrt(k)
    if form == "dual":
        psi = w @ z.T / math.sqrt(k)
        c = np.linalg.solve(psi.T @ psi + ridge * np.eye(z.shape[0]), y)
        return psi @ c
    raise InvalidArgumentError(f"unknown form {form!r}")


def _bartlett_wishart(rng, dim, dof):
    # identity-scale Wishart via Bartlett factor L L^T
    from scipy.stats import wishart
    return wishart(df=dof, scale=np.eye(dim), seed=rng).rvs()


def _gaussian_wishart(rng, dim, dof):
    # CLT: W = dof I + sqrt(dof) S, S symmetric with N(0,1) off-diagonal and N(0,2) diagonal
    a = rng.standard_normal((dim, dim))
    s = (a + a.T) / math.sqrt(2.0)
    return dof * np.eye(dim) + math.sqrt(dof) * s


CLT_DOF = 100000


def synthetic_powerlaw_kernel(task, samples, max_index, seed=0, explicit_modes=None,
                              block_ratio=1.2, noise_var=0.0, name="synthetic"):
    """Kernel matrix and labels for Gaussian data with powerlaw eigenstructure.

    Builds ``K = sum_i lam_i x_i x_i^T`` and ``y = sum_i v_i x_i (+ noise)``
    over modes ``1..max_index`` with ``x_i ~ N(0, I_N)``.  The first
    ``explicit_modes`` (default ``2 N``) are drawn directly.  Remaining modes
    are grouped into blocks of geometric width ``block_ratio``; within a
    block ``v_b = (v_i)`` is rotated onto one direction, so the block
    contributes ``lam_g g g^T + lam_w Wishart(N, m - 1)`` to ``K`` and
    ``||v_b|| g`` to ``y``, with ``lam_g`` the ``v^2``-weighted mean
    eigenvalue and ``lam_w`` chosen to keep the block trace.

    Returns
    -------
    KernelDataset
    """
    from .estimation import KernelDataset
    N = int(samples)
    max_index = int(max_index)
    e = int(explicit_modes) if explicit_modes is not None else min(2 * N, max_index)
    rng = _rng(seed, 7)
    a, b = task.alpha, task.beta
    idx = np.arange(1, e + 1, dtype=np.float64)
    x = rng.standard_normal((N, e))
    y = x @ idx ** (-b / 2)
    xs = x * idx ** (-a / 2)
    K = xs @ xs.T
    del x, xs
    start = e + 1
    while start <= max_index:
        stop = min(max_index, max(start + 1, int(math.ceil(start * block_ratio))))
        i = np.arange(start, stop + 1, dtype=np.float64)
        lam, vsq = i ** -a, i ** -b
        m = i.size
        g = rng.standard_normal(N)
        lam_g = float(np.sum(lam * vsq) / np.sum(vsq))
        y += math.sqrt(float(np.sum(vsq))) * g
        K += lam_g * np.outer(g, g)
        if m > 1:
            lam_w = (float(np.sum(lam)) - lam_g) / (m - 1)
            d = m - 1
            if d < N:
                h = rng.standard_normal((N, d))
                K += lam_w * (h @ h.T)
            elif d < CLT_DOF:
                K += lam_w * _bartlett_wishart(rng, N, d)
            else:
                K += lam_w * _gaussian_wishart(rng, N, d)
        start = stop + 1
    if noise_var > 0:
        y += math.sqrt(noise_var) * rng.standard_normal(N)
    K = 0.5 * (K + K.T)
    return KernelDataset(K, y[:, None], name)


def kernel_dataset_from_structure(ts, samples, seed=0, name="structure"):
    """Exact Gaussian kernel dataset for an explicit-mode structure."""
    from .estimation import KernelDataset
    _check_sim_task(ts)
    x, y, _ = _draw_dataset(ts, int(samples), seed, 0)
    z = x * np.sqrt(ts.eigenvalues)
    K = z @ z.T
    return KernelDataset(0.5 * (K + K.T), y[:, None], name)
