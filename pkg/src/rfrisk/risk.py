"""Omniscient test/train risk estimates and the optimal-ridge search."""
from dataclasses import dataclass, asdict
import math
from typing import NamedTuple, Optional

import numpy as np

from .eigensolver import (DEFAULT_TOL, ImplicitConstants, solve_krr_kappa, solve_rf_constants,
                          solve_ridgeless)
from .errors import InvalidArgumentError, NumericalError, ThresholdSingularityError

NEAR_THRESHOLD = 1e-6

CSV_COLUMNS = ("n", "k", "delta", "kappa", "gamma", "e_test", "e_train", "ratio", "e0",
               "bias_d", "var_d", "bias_df", "var_df")


@dataclass(frozen=True)
class RiskReport:
    """Predicted risks at one ``(n, k, ridge)`` point.

    ``bias_d + var_d`` and ``bias_df + var_df`` both equal ``e_test``; the
    ``_d`` split averages over data only, ``_df`` over data and features.
    ``near_threshold`` is set when the prefactor denominator is below
    ``1e-6`` (the double-descent peak).
    """

    e_test: float
    e_train: float
    fitting_ratio: float
    overfitting_coeff: float
    bias_d: float
    var_d: float
    bias_df: float
    var_df: float
    constants: ImplicitConstants
    near_threshold: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constants"] = self.constants.to_dict()
        return d

    def csv_row(self) -> tuple:
        c = self.constants
        k = c.k if math.isfinite(c.k) else math.inf
        return (c.n, k, c.ridge, c.kappa, c.gamma, self.e_test, self.e_train, self.fitting_ratio,
                self.overfitting_coeff, self.bias_d, self.var_d, self.bias_df, self.var_df)


def _ratio(c: ImplicitConstants) -> float:
    if c.kappa_vanishes:
        return (1.0 - c.k / c.n) ** 2
    return (c.ridge / (c.n * c.kappa)) ** 2


def rf_risk(ts, n, k, ridge, tol: float = DEFAULT_TOL) -> RiskReport:
    """Predicted RF regression test and train risk.

    Parameters
    ----------
    ts : TaskEigenstructure
    n, k : float
        Samples and random features.
    ridge : float
        Nonnegative ridge; zero uses the ridgeless limit.

    Raises
    ------
    ThresholdSingularityError
        The prefactor denominator is not positive (``n == k`` at zero ridge).
    """
    if ridge == 0:
        c = solve_ridgeless(ts, n, k, tol=tol)
    else:
        c = solve_rf_constants(ts, n, k, ridge, tol=tol)
    return _rf_report(ts, c)


def _rf_report(ts, c: ImplicitConstants) -> RiskReport:
    n, k = c.n, c.k
    s = ts.bank.sums(c.gamma)
    z, q = c.z, c.q
    denom = 1.0 - (q * (k - 2.0 * z) + z * z) / (n * (k - q))
    if not denom > 0:
        raise ThresholdSingularityError(
            f"risk prefactor denominator {denom:.3e} <= 0 at n={n}, k={k}, ridge={c.ridge}")
    e0 = 1.0 / denom
    noise = ts.noise_var
    bias_d = s.b1 - c.kappa * k / (k - q) * s.c1 + noise
    e_test = e0 * bias_d
    bias_df = s.b2 + noise
    ratio = _ratio(c)
    return RiskReport(e_test, ratio * e_test, ratio, e0, bias_d, e_test - bias_d, bias_df,
                      e_test - bias_df, c, denom < NEAR_THRESHOLD)


def krr_risk(ts, n, ridge, tol: float = DEFAULT_TOL) -> RiskReport:
    """Predicted KRR test and train risk.

    ``E0 = n/(n - q)`` multiplies ``B = sum (kappa/(lam+kappa))^2 v^2 + sigma^2``.
    Both bias/variance splits coincide here since there is no feature
    randomness.
    """
    c = solve_krr_kappa(ts, n, ridge, tol=tol)
    s = ts.bank.sums(c.kappa)
    gap = c.n - c.q
    if not gap > 0:
        raise ThresholdSingularityError(f"n - q = {gap:.3e} <= 0")
    e0 = c.n / gap
    bias = s.b2 + ts.noise_var
    e_test = e0 * bias
    ratio = _ratio(c)
    return RiskReport(e_test, ratio * e_test, ratio, e0, bias, e_test - bias, bias,
                      e_test - bias, c, gap / c.n < NEAR_THRESHOLD)


@dataclass(frozen=True)
class Learnabilities:
    """Per-mode learnabilities of the explicit modes and the full sum."""

    values: np.ndarray
    total: float
    budget: float
    slack: float


def learnabilities(constants: ImplicitConstants, ts) -> Learnabilities:
    """``L_i = lam_i/(lam_i + gamma)`` and the conservation slack.

    Examples
    --------
    >>> from rfrisk.spectrum import TaskEigenstructure
    >>> from rfrisk.eigensolver import ImplicitConstants
    >>> c = ImplicitConstants(1.0, 1.0, 0.5, 0.25, (0, 0), 4.0, 4.0, 1.0)
    >>> learnabilities(c, TaskEigenstructure([1.0], [1.0])).values.tolist()
    [0.5]
    """
    bank = ts.bank
    vals = bank.explicit_learnabilities(constants.gamma)
    total = bank.z(constants.gamma)
    budget = min(constants.n, constants.k)
    return Learnabilities(vals, total, budget, budget - total)


class OptimalRidge(NamedTuple):
    """Result of :func:`optimal_ridge`.

    ``boundary`` is ``"zero"`` when the ridgeless endpoint wins, ``"upper"``
    when the minimum sits at the top of the search bracket and ``None``
    otherwise.  ``unimodal`` is False if the coarse scan saw more than one
    local minimum.
    """

    delta: float
    report: RiskReport
    unimodal: bool
    boundary: Optional[str]


def _risk_fn(ts, n, k, tol):
    def f(delta):
        try:
            if k is None:
                return krr_risk(ts, n, delta, tol=tol)
            return rf_risk(ts, n, k, delta, tol=tol)
        except ThresholdSingularityError:
            return None
    return f


def optimal_ridge(ts, n, k=None, bounds=(1e-12, 1e6), grid_points: int = 61,
                  tol: float = DEFAULT_TOL, xtol: float = 1e-7) -> OptimalRidge:
    """Minimize the predicted test risk over the ridge.

    A coarse log grid over ``bounds * sum(lam)`` locates the basin, a
    golden-section search on ``log delta`` refines it, and the ridgeless
    endpoint ``delta = 0`` is compared when the basin touches the lower
    bound.

    Parameters
    ----------
    ts : TaskEigenstructure
    n : float
    k : float, optional
        Number of features; ``None`` selects KRR.
    bounds : tuple of float
        Search bracket in units of the eigenvalue trace.
    grid_points : int
        Size of the coarse scan.
    xtol : float
        Golden-section stopping width in ``log delta``.
    """
    if grid_points < 3:
        raise InvalidArgumentError("grid_points must be >= 3")
    scale = ts.bank.trace if ts.bank.trace > 0 else 1.0
    lo_b, hi_b = bounds
    if not 0 < lo_b < hi_b:
        raise InvalidArgumentError(f"bad ridge bounds {bounds}")
    f = _risk_fn(ts, n, k, tol)
    cache = {}

    def err(logd):
        if logd not in cache:
            rep = f(math.exp(logd))
            cache[logd] = (math.inf if rep is None else rep.e_test, rep)
        return cache[logd][0]

    grid = np.linspace(math.log(lo_b * scale), math.log(hi_b * scale), grid_points)
    vals = np.array([err(x) for x in grid])
    if not np.any(np.isfinite(vals)):
        raise NumericalError("risk is singular over the whole ridge bracket")
    i = int(np.argmin(vals))
    # local minima of the scan, ignoring flat runs at float resolution
    rel = 1e-12 * np.nanmax(np.abs(vals[np.isfinite(vals)]))
    minima = 0
    for j in range(grid_points):
        left = vals[j - 1] if j > 0 else math.inf
        right = vals[j + 1] if j < grid_points - 1 else math.inf
        if vals[j] < left - rel and vals[j] <= right + rel and np.isfinite(vals[j]):
            minima += 1
    unimodal = minima <= 1

    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid_points - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = err(c), err(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = err(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = err(d)
    best_x = min(cache, key=lambda x: cache[x][0])
    best_e, best_rep = cache[best_x]
    delta = math.exp(best_x)
    boundary = None
    if i == grid_points - 1:
        boundary = "upper"
    elif i == 0:
        try:
            zero = krr_risk(ts, n, 0.0, tol=tol) if k is None else rf_risk(ts, n, k, 0.0, tol=tol)
        except NumericalError:
            zero = None
        if zero is not None and zero.e_test <= best_e:
            delta, best_rep, boundary = 0.0, zero, "zero"
    return OptimalRidge(delta, best_rep, unimodal, boundary)
