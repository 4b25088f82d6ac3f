"""Special-case risk formulas used to cross-check the general RF estimate.

Each limit is evaluated from its own closed form with its own root solves
on the mode sums.  Nothing here calls into :mod:`rfrisk.eigensolver` or
:mod:`rfrisk.risk` except :func:`check_all_limits`, which compares the two
code paths.
"""
from dataclasses import dataclass, asdict
import enum
import math

import numpy as np

from .errors import InvalidArgumentError, NoSolutionError, NumericalError, ThresholdSingularityError
from .spectrum import PowerlawTail, TaskEigenstructure

EPS = 1e-300


class LimitName(str, enum.Enum):
    KRR = "krr"
    RIDGELESS_UNDERPARAM = "ridgeless_underparam"  # n > k
    RIDGELESS_OVERPARAM = "ridgeless_overparam"    # n < k
    MALONEY = "maloney"
    INFINITE_RIDGE = "infinite_ridge"
    LARGE_N = "large_n"


@dataclass(frozen=True)
class LimitCheckResult:
    limit_name: LimitName
    general_value: float
    limit_value: float
    relative_gap: float
    params: dict

    def to_dict(self):
        d = asdict(self)
        d["limit_name"] = self.limit_name.value
        return d


def _gap(general, limit):
    return abs(general - limit) / max(abs(limit), EPS)


def _root_log(f, hi):
    # decreasing f, f(hi) < 0; plain geometric bisection after a downward sweep
    lo = hi
    while f(lo) <= 0:
        lo /= 10.0
        if lo < 1e-300:
            raise NumericalError("failed to bracket root")
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def _level(bank, m):
    if not 0 < m < bank.rank:
        raise NoSolutionError(f"z(gamma) = {m} has no positive solution (rank {bank.rank})")
    return _root_log(lambda g: bank.z(g) - m, 4.0 * bank.trace / m + 1.0)


def krr_limit_risk(ts, n, ridge) -> float:
    """KRR test risk ``n/(n - q) [sum (kappa/(lam+kappa))^2 v^2 + sigma^2]``."""
    bank = ts.bank
    if ridge == 0 and bank.rank <= n:
        raise NoSolutionError("ridgeless KRR needs rank > n")
    kappa = _root_log(lambda x: bank.z(x) + ridge / x - n, 2.0 * (bank.trace + ridge) / n + 1.0)
    s = bank.sums(kappa)
    return n / (n - s.q) * (s.b2 + ts.noise_var)


def bach_ridgeless_risk(ts, n, k) -> float:
    """Zero-ridge RF test risk in both parameterization regimes.

    ``n < k``: ``n/(n-q)[sum G^2 v^2 + s2] + n/(k-n)[sum G v^2 + s2]`` with
    ``z(gamma) = n``.  ``n > k``: ``n/(n-k)[sum G v^2 + s2]`` with
    ``z(gamma) = k``.  Here ``G = gamma/(lam+gamma)``.
    """
    n, k = float(n), float(k)
    if n == k:
        raise ThresholdSingularityError("n == k")
    bank = ts.bank
    s2 = ts.noise_var
    if n < k:
        s = bank.sums(_level(bank, n))
        return n / (n - s.q) * (s.b2 + s2) + n / (k - n) * (s.b1 + s2)
    s = bank.sums(_level(bank, k))
    return n / (n - k) * (s.b1 + s2)


def _is_student_teacher(ts) -> bool:
    if ts.noise_var != 0 or ts.scale != 1.0:
        return False
    if not np.array_equal(ts.eigenvalues, ts.coeffs_sq):
        return False
    return ts.tail is None or ts.tail.alpha == ts.tail.beta


def maloney_risk(ts, n, k) -> float:
    """Student-equals-teacher ridgeless risk.

    ``Delta`` solves ``1 = sum lam/(m lam + Delta)`` with ``m = min(n, k)``;
    the risk is ``k/(k-n) Delta`` for ``n < k`` and ``n/(n-k) Delta`` else.
    """
    n, k = float(n), float(k)
    if n == k:
        raise ThresholdSingularityError("n == k")
    if not _is_student_teacher(ts):
        raise InvalidArgumentError("maloney_risk needs coeffs_sq == eigenvalues and zero noise")
    bank = ts.bank
    m = min(n, k)
    if bank.rank <= m:
        delta = 0.0
    else:
        # sum lam/(m lam + D) = z(D/m)/m
        delta = _root_log(lambda d: bank.z(d / m) / m - 1.0, 4.0 * bank.trace + 1.0)
    return (k / (k - n) if n < k else n / (n - k)) * delta


def infinite_ridge_risk(ts) -> float:
    """``sum v^2 + sigma^2``: the predictor is identically zero."""
    return ts.bank.s0 + ts.noise_var


def large_n_risk(ts, k) -> float:
    """``n -> inf`` RF risk ``sum gamma/(lam+gamma) v^2 + sigma^2`` with ``z(gamma) = k``."""
    bank = ts.bank
    if bank.rank <= k:
        # every nonzero mode is learned; only the null space remains
        zero_power = float(np.sum(ts.coeffs_sq[ts.eigenvalues == 0]) * ts.scale)
        return zero_power + ts.noise_var
    return bank.sums(_level(bank, k)).b1 + ts.noise_var


def student_teacher(ts) -> TaskEigenstructure:
    """Task with ``v_i^2 = lam_i`` and no noise on the same spectrum."""
    tail = None
    if ts.tail is not None:
        tail = PowerlawTail(ts.tail.alpha, ts.tail.alpha, ts.tail.start)
    return TaskEigenstructure(ts.eigenvalues, ts.eigenvalues, 0.0, tail)


DEFAULT_GRID = {"ridge": 1e-2, "k_large": 1e9, "ridge_small": 1e-10,
                "ridge_large": 1e12, "n_large": 1e9}


def check_all_limits(ts, n, k, grid=None) -> list:
    """Compare the general RF estimate with every applicable limit formula.

    Parameters
    ----------
    ts : TaskEigenstructure
    n, k : float
        Base sample and feature counts; the ridgeless checks use
        ``(min, max)`` for the overparameterized case and ``(max, min)`` for
        the underparameterized one, so ``n != k`` is required.
    grid : dict, optional
        Overrides for :data:`DEFAULT_GRID`.
    """
    from .risk import rf_risk  # general path under test

    g = dict(DEFAULT_GRID)
    if grid:
        unknown = set(grid) - set(g)
        if unknown:
            raise InvalidArgumentError(f"unknown limit grid keys {sorted(unknown)}")
        g.update(grid)
    n, k = float(n), float(k)
    if n == k:
        raise InvalidArgumentError("check_all_limits needs n != k")
    lo, hi = min(n, k), max(n, k)
    out = []

    def add(name, general, limit, **params):
        out.append(LimitCheckResult(name, general, limit, _gap(general, limit), params))

    add(LimitName.KRR, rf_risk(ts, n, g["k_large"], g["ridge"]).e_test,
        krr_limit_risk(ts, n, g["ridge"]), n=n, k=g["k_large"], ridge=g["ridge"])
    add(LimitName.RIDGELESS_OVERPARAM, rf_risk(ts, lo, hi, g["ridge_small"]).e_test,
        bach_ridgeless_risk(ts, lo, hi), n=lo, k=hi, ridge=g["ridge_small"])
    add(LimitName.RIDGELESS_UNDERPARAM, rf_risk(ts, hi, lo, g["ridge_small"]).e_test,
        bach_ridgeless_risk(ts, hi, lo), n=hi, k=lo, ridge=g["ridge_small"])
    st = student_teacher(ts)
    for a, b in ((lo, hi), (hi, lo)):
        add(LimitName.MALONEY, rf_risk(st, a, b, g["ridge_small"]).e_test,
            maloney_risk(st, a, b), n=a, k=b, ridge=g["ridge_small"])
    add(LimitName.INFINITE_RIDGE, rf_risk(ts, n, k, g["ridge_large"]).e_test,
        infinite_ridge_risk(ts), n=n, k=k, ridge=g["ridge_large"])
    add(LimitName.LARGE_N, rf_risk(ts, g["n_large"], k, g["ridge"]).e_test,
        large_n_risk(ts, k), n=g["n_large"], k=k, ridge=g["ridge"])
    return out
