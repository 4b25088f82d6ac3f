"""Powerlaw exponent measurement from empirical kernel matrices.

Two proxy measurements are provided: ``alpha`` from the decay of
``1/tr(K_n^-1)`` over random principal submatrices and ``beta`` from the
decay of the ridgeless KRR held-out error.  :func:`direct_eigenstructure`
implements the direct method (diagonalize the full kernel and fit the
spectrum) for comparison; its estimates carry a strong finite-size bias.
"""
from dataclasses import dataclass, field
import json
import math
import warnings

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError, SingularMatrixError

SYMMETRY_TOL = 1e-8
DEFAULT_WINDOW = (0.1, 0.8)
DEFAULT_REPS = 5


class StabilizedWarning(UserWarning):
    """A kernel submatrix needed a diagonal ridge to factorize."""


@dataclass(frozen=True, eq=False)
class KernelDataset:
    """Symmetric PSD kernel matrix ``K`` (N x N) and labels ``Y`` (N x C)."""

    K: np.ndarray
    Y: np.ndarray
    name: str = "kernel"

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if Y.ndim == 1:
            Y = Y[:, None]
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise InvalidArgumentError("K must be square")
        if Y.ndim != 2 or Y.shape[0] != K.shape[0]:
            raise InvalidArgumentError("Y must have one row per sample")
        scale = max(float(np.max(np.abs(K))), 1.0) if K.size else 1.0
        if K.size and np.max(np.abs(K - K.T)) > SYMMETRY_TOL * scale:
            raise InvalidArgumentError("K is not symmetric")
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(Y))):
            raise InvalidArgumentError("K and Y must be finite")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Y", Y)

    @property
    def N(self) -> int:
        return int(self.K.shape[0])

    @property
    def C(self) -> int:
        return int(self.Y.shape[1])

    @property
    def metadata(self) -> dict:
        return {"name": self.name, "N": self.N, "C": self.C}


def save_kernel_file(ds: KernelDataset, path):
    """Write the binary kernel format: JSON header line, then raw ``<f8`` K and Y."""
    header = dict(ds.metadata, dtype="f64", layout="row-major")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(ds.K, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.Y, dtype="<f8").tobytes())


def load_kernel_file(path) -> KernelDataset:
    """Read a kernel file; ``.csv`` paths go through :func:`load_kernel_csv`."""
    if str(path).lower().endswith(".csv"):
        return load_kernel_csv(path)
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
            N, C = int(header["N"]), int(header["C"])
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            raise InvalidArgumentError(f"bad kernel file header: {exc}") from exc
        if header.get("dtype", "f64") != "f64" or header.get("layout", "row-major") != "row-major":
            raise InvalidArgumentError("only dtype f64, row-major kernel files are supported")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != N * N + N * C:
        raise InvalidArgumentError(f"kernel file holds {data.size} values, expected {N * N + N * C}")
    K = data[:N * N].reshape(N, N).astype(np.float64)
    Y = data[N * N:].reshape(N, C).astype(np.float64)
    return KernelDataset(K, Y, str(header.get("name", "kernel")))


def load_kernel_csv(path, name=None) -> KernelDataset:
    """Plain CSV: ``N`` rows, each holding the ``N`` kernel entries then ``C`` labels."""
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    N = arr.shape[0]
    if arr.shape[1] <= N:
        raise InvalidArgumentError("CSV kernel rows need N kernel entries followed by labels")
    return KernelDataset(arr[:, :N], arr[:, N:], name or str(path))


def _chol(K):
    """Cholesky factor, adding ``1e-12 tr(K)/N`` to the diagonal if needed."""
    try:
        return linalg.cholesky(K, lower=True, check_finite=False), False
    except linalg.LinAlgError:
        pass
    N = K.shape[0]
    jitter = 1e-12 * float(np.trace(K)) / N
    warnings.warn(f"kernel matrix not positive definite; adding ridge {jitter:.2e}", StabilizedWarning)
    try:
        return linalg.cholesky(K + jitter * np.eye(N), lower=True, check_finite=False), True
    except linalg.LinAlgError as exc:
        raise SingularMatrixError("kernel matrix singular after stabilization") from exc


def kappa_proxy(K_sub) -> float:
    """``1 / tr(K^-1)`` of a kernel (sub)matrix.

    Examples
    --------
    >>> kappa_proxy(np.eye(4))
    0.25
    """
    K = np.asarray(K_sub, dtype=np.float64)
    L, _ = _chol(K)
    Linv = linalg.solve_triangular(L, np.eye(K.shape[0]), lower=True, check_finite=False)
    return 1.0 / float(np.sum(Linv * Linv))


@dataclass(frozen=True)
class ExponentFit:
    """Linear fit of ``log y`` against ``log x`` over an index window.

    ``exponent`` is the quantity of interest derived from ``slope``.
    ``flags`` names anything suspicious about the fit.
    """

    exponent: float
    slope: float
    intercept: float
    window: tuple
    x: np.ndarray
    y: np.ndarray
    residual: float
    flags: tuple = field(default=())

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "slope": self.slope, "intercept": self.intercept,
                "window": list(self.window), "x": self.x.tolist(), "y": self.y.tolist(),
                "residual": self.residual, "flags": list(self.flags)}


def _window(npts, window):
    lo, hi = window
    if not 0 <= lo < hi <= 1:
        raise InvalidArgumentError(f"bad fit window {window}")
    i0 = int(math.floor(lo * npts))
    i1 = max(int(math.ceil(hi * npts)), i0 + 2)
    i1 = min(i1, npts)
    if i1 - i0 < 2:
        raise InvalidArgumentError("fit window holds fewer than 2 points")
    return i0, i1


def loglog_fit(x, y, window=DEFAULT_WINDOW, loss="lsq"):
    """Fit ``log y = slope log x + intercept`` on the window slice.

    ``loss="lad"`` uses least absolute deviations by iteratively reweighted
    least squares.  Returns ``(slope, intercept, (i0, i1), rms residual)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    i0, i1 = _window(x.size, window)
    lx, ly = np.log(x[i0:i1]), np.log(y[i0:i1])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef = np.linalg.lstsq(A, ly, rcond=None)[0]
    if loss == "lad":
        for _ in range(50):
            r = np.abs(ly - A @ coef)
            w = 1.0 / np.maximum(r, 1e-8)
            sw = np.sqrt(w)
            coef = np.linalg.lstsq(A * sw[:, None], ly * sw, rcond=None)[0]
    elif loss != "lsq":
        raise InvalidArgumentError(f"unknown loss {loss!r}")
    res = float(np.sqrt(np.mean((ly - A @ coef) ** 2)))
    return float(coef[0]), float(coef[1]), (i0, i1), res


def _sizes(sizes, cap):
    s = np.asarray(sizes, dtype=np.int64)
    if s.size < 3:
        raise InvalidArgumentError("need at least 3 sizes to fit a slope")
    if np.any(np.diff(s) <= 0) or s[0] < 1:
        raise InvalidArgumentError("sizes must be positive and strictly increasing")
    if s[-1] > cap:
        raise InvalidArgumentError(f"largest size {s[-1]} exceeds available {cap}")
    return s


def default_sizes(cap, start=16, points=24):
    """Geometric grid of distinct integer sizes from ``start`` to ``cap``."""
    return np.unique(np.round(np.geomspace(start, cap, points)).astype(np.int64))


def measure_alpha(ds: KernelDataset, sizes=None, subsample_seed=0, reps=DEFAULT_REPS,
                  window=DEFAULT_WINDOW, loss="lsq") -> ExponentFit:
    """Estimate ``alpha`` from the decay of ``1/tr(K_n^-1)`` with ``n``.

    For each size, ``reps`` principal submatrices are drawn without
    replacement and their proxies averaged in log space.
    """
    sizes = _sizes(default_sizes(ds.N) if sizes is None else sizes, ds.N)
    rng = np.random.default_rng(subsample_seed)
    vals = np.empty(sizes.size)
    for j, n in enumerate(sizes):
        logs = []
        for _ in range(reps):
            idx = np.sort(rng.choice(ds.N, size=int(n), replace=False))
            logs.append(math.log(kappa_proxy(ds.K[np.ix_(idx, idx)])))
        vals[j] = math.exp(np.mean(logs))
    slope, icpt, win, res = loglog_fit(sizes, vals, window, loss)
    flags = []
    if abs(slope + 1.0) < 0.02:
        # 1/tr(K^-1) ~ lam/n for a flat spectrum: the proxy is not resolving a powerlaw
        flags.append("unit_slope_artifact")
    if res > 0.1:
        flags.append("poor_linear_fit")
    return ExponentFit(-slope, slope, icpt, win, sizes.astype(float), vals, res, tuple(flags))


def _krr_heldout_mse(K, Y, train, test):
    L, _ = _chol(K[np.ix_(train, train)])
    c = linalg.cho_solve((L, True), Y[train], check_finite=False)
    pred = K[np.ix_(test, train)] @ c
    return float(np.mean((pred - Y[test]) ** 2))


def measure_beta(ds: KernelDataset, sizes=None, subsample_seed=0, reps=DEFAULT_REPS,
                 window=DEFAULT_WINDOW, loss="lsq", held_out=None) -> ExponentFit:
    """Estimate ``beta`` from the decay of ridgeless KRR test error, ``n^-(beta-1)``.

    A fixed random block of ``held_out`` samples (default ``N // 4``) is
    reserved for testing; training subsets are drawn from the rest.
    """
    held_out = ds.N // 4 if held_out is None else int(held_out)
    if not 1 <= held_out < ds.N:
        raise InvalidArgumentError("held_out must leave at least one training sample")
    pool = ds.N - held_out
    sizes = _sizes(default_sizes(pool) if sizes is None else sizes, pool)
    rng = np.random.default_rng(subsample_seed)
    perm = rng.permutation(ds.N)
    test, train_pool = np.sort(perm[:held_out]), perm[held_out:]
    vals = np.empty(sizes.size)
    for j, n in enumerate(sizes):
        logs = []
        for _ in range(reps):
            tr = np.sort(rng.choice(train_pool, size=int(n), replace=False))
            logs.append(math.log(_krr_heldout_mse(ds.K, ds.Y, tr, test)))
        vals[j] = math.exp(np.mean(logs))
    slope, icpt, win, res = loglog_fit(sizes, vals, window, loss)
    flags = []
    if abs(slope) < 0.05:
        flags.append("no_powerlaw")
    if res > 0.1:
        flags.append("poor_linear_fit")
    return ExponentFit(1.0 - slope, slope, icpt, win, sizes.astype(float), vals, res, tuple(flags))


@dataclass(frozen=True)
class DirectEigenstructure:
    """Empirical eigenvalues ``eig(K)/N`` (descending), ``v_hat^2`` per label
    column and their tail sums ``sum_{j >= i} v_hat_j^2``."""

    eigenvalues: np.ndarray
    coeffs_sq: np.ndarray
    tailsums: np.ndarray


def direct_eigenstructure(ds: KernelDataset) -> DirectEigenstructure:
    """Diagonalize the full kernel (``O(N^3)``).

    With ``K = Phi diag(lam_hat) Phi^T`` and ``Phi^T Phi = N I``, the
    eigenvalues are ``eig(K)/N`` and ``v_hat = Phi^T y / N``, so
    ``sum_i v_hat_i^2 = ||y||^2 / N``.
    """
    evals, evecs = linalg.eigh(ds.K, check_finite=False)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    v = evecs.T @ ds.Y / math.sqrt(ds.N)
    vsq = v * v
    tails = np.cumsum(vsq[::-1], axis=0)[::-1]
    return DirectEigenstructure(evals / ds.N, vsq, tails)


def direct_exponents(ds: KernelDataset, window=DEFAULT_WINDOW, loss="lsq", column=0):
    """Direct-method fits ``(alpha_fit, beta_fit)`` of the empirical spectrum.

    ``alpha`` is minus the slope of ``lam_hat_i`` against ``i``; ``beta`` is
    one minus the slope of the coefficient tail sums.  Nonpositive
    eigenvalues (round-off) are dropped before fitting.
    """
    d = direct_eigenstructure(ds)
    lam = d.eigenvalues
    keep = lam > 0
    idx = np.arange(1, lam.size + 1, dtype=float)
    s_a, i_a, w_a, r_a = loglog_fit(idx[keep], lam[keep], window, loss)
    tails = d.tailsums[:, column]
    keep_t = tails > 0
    s_b, i_b, w_b, r_b = loglog_fit(idx[keep_t], tails[keep_t], window, loss)
    fa = ExponentFit(-s_a, s_a, i_a, w_a, idx[keep], lam[keep], r_a)
    fb = ExponentFit(1.0 - s_b, s_b, i_b, w_b, idx[keep_t], tails[keep_t], r_b)
    return fa, fb
