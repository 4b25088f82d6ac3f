"""Solvers for the implicit regularization constants.

KRR needs one constant ``kappa`` solving ``sum L_i(kappa) + ridge/kappa = n``.
RF regression needs the pair ``(kappa, gamma)`` solving

    z(gamma) + ridge/kappa      = n
    z(gamma) + k kappa / gamma  = k

with ``z(gamma) = sum lam_i/(lam_i + gamma)``.  Every solve is a bracketed
bisection on ``log`` of the unknown, and every returned solution carries its
residuals, which are checked against the tolerance before returning.
"""
from dataclasses import dataclass, asdict
import math

import numpy as np

from .errors import (ConvergenceError, InvalidArgumentError, NoSolutionError,
                     ThresholdSingularityError)

DEFAULT_TOL = 1e-10
MAX_ITER = 200
_EXPAND = 16.0


@dataclass(frozen=True)
class ImplicitConstants:
    """Solved constants and the mode sums evaluated at ``gamma``.

    ``k`` is ``inf`` for KRR.  ``kappa_vanishes`` marks the ridgeless
    underparameterized case ``n > k`` where ``kappa`` is exactly zero and
    ``ridge/kappa`` is understood as its limit ``n - k``.
    """

    kappa: float
    gamma: float
    z: float
    q: float
    residuals: tuple
    n: float
    k: float
    ridge: float
    kappa_vanishes: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residuals"] = list(self.residuals)
        d["k"] = None if math.isinf(self.k) else self.k
        return d


def _positive(name, x, allow_zero=False):
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a real number, got {x!r}") from None
    if not math.isfinite(x) or x < 0 or (x == 0 and not allow_zero):
        raise InvalidArgumentError(f"{name} must be finite and {'>=' if allow_zero else '>'} 0, got {x}")
    return x


def _floor(bank):
    # smallest regularizer the tail representation resolves
    return 2.0 * bank.lam_far if bank.has_tail else 0.0


def _bisect_decreasing(f, hi, max_iter, floor=0.0):
    """Bracket and bisect the root of a decreasing ``f`` on ``log x``.

    ``f(hi)`` must be negative.  The lower end is found by dividing by 16
    until ``f`` turns positive.  Returns ``(lo, hi)`` at float resolution.
    """
    if not f(hi) < 0:
        raise ConvergenceError(f"upper bracket {hi:.3e} does not bound the root")
    for _ in range(max_iter):
        lo = hi / _EXPAND
        if lo <= floor:
            lo = floor * (1.0 + 1e-12)
            if not f(lo) > 0:
                raise ConvergenceError("root lies below the resolved regularizer range")
            break
        if f(lo) > 0:
            break
        hi = lo
    else:
        raise ConvergenceError("failed to bracket the root from below")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def solve_level(bank, target: float, max_iter: int = MAX_ITER) -> float:
    """Return ``gamma`` with ``z(gamma) = target`` (``0 < target < rank``)."""
    if not 0 < target < bank.rank:
        raise NoSolutionError(f"level {target} not attainable with effective rank {bank.rank}")
    hi = 2.0 * bank.trace / target
    lo, hi = _bisect_decreasing(lambda g: bank.z(g) - target, hi, max_iter, _floor(bank))
    return lo if abs(bank.z(lo) - target) < abs(bank.z(hi) - target) else hi


def solve_krr_kappa(ts, n, ridge, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> ImplicitConstants:
    """Solve ``sum_i lam_i/(lam_i+kappa) + ridge/kappa = n`` for ``kappa``.

    Parameters
    ----------
    ts : TaskEigenstructure
    n : float
        Number of samples.
    ridge : float
        Nonnegative ridge. Zero requires more than ``n`` nonzero modes.

    Returns
    -------
    ImplicitConstants
        With ``gamma == kappa`` and ``k = inf``.

    Examples
    --------
    >>> from rfrisk.spectrum import TaskEigenstructure
    >>> c = solve_krr_kappa(TaskEigenstructure([1.0], [1.0]), 2, 1.0)
    >>> round(c.kappa, 6)
    0.707107
    """
    n = _positive("n", n)
    ridge = _positive("ridge", ridge, allow_zero=True)
    bank = ts.bank
    if ridge == 0 and bank.rank <= n:
        raise NoSolutionError(f"ridgeless KRR needs more than n={n} nonzero modes (rank {bank.rank})")
    if bank.trace == 0:
        kappa = ridge / n
        return ImplicitConstants(kappa, kappa, 0.0, 0.0, (0.0, 0.0), n, math.inf, ridge)

    def f(kap):
        return bank.z(kap) + ridge / kap - n

    hi = 2.0 * (bank.trace + ridge) / n
    lo, hi = _bisect_decreasing(f, hi, max_iter, _floor(bank))
    kappa = lo if abs(f(lo)) < abs(f(hi)) else hi
    s = bank.sums(kappa)
    r = (s.z + ridge / kappa - n) / n
    if not abs(r) <= tol:
        raise ConvergenceError(f"KRR residual {r:.2e} exceeds tolerance {tol:.1e} (n={n}, ridge={ridge})")
    return ImplicitConstants(kappa, kappa, s.z, s.q, (r, 0.0), n, math.inf, ridge)


def _rf_residuals(s, kappa, gamma, n, k, ridge):
    r1 = (s.z + ridge / kappa - n) / n
    r2 = (s.z + k * kappa / gamma - k) / k
    return r1, r2


def solve_rf_constants(ts, n, k, ridge, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                       method: str = "reduced") -> ImplicitConstants:
    """Solve the coupled RF equations for ``(kappa, gamma)``.

    Parameters
    ----------
    ts : TaskEigenstructure
    n, k : float
        Samples and features.
    ridge : float
        Nonnegative ridge. ``ridge == 0`` is delegated to
        :func:`solve_ridgeless` when ``n < k``.
    method : {"reduced", "nested"}
        ``"reduced"`` eliminates ``kappa`` and bisects a single monotone
        function of ``gamma``; ``"nested"`` runs the inner/outer loop over
        ``kappa`` and ``gamma`` and is kept as an independent cross-check.

    Raises
    ------
    NoSolutionError
        ``ridge == 0`` with ``n > k``.
    """
    n = _positive("n", n)
    k = _positive("k", k)
    ridge = _positive("ridge", ridge, allow_zero=True)
    if ridge == 0:
        if n < k:
            return solve_ridgeless(ts, n, k, tol=tol, max_iter=max_iter)
        if n > k:
            raise NoSolutionError("no solution at zero ridge with n > k; use solve_ridgeless for the limit")
        raise ThresholdSingularityError("n == k at zero ridge")
    bank = ts.bank
    if bank.trace == 0:
        kappa = ridge / n
        return ImplicitConstants(kappa, kappa, 0.0, 0.0, (0.0, 0.0), n, k, ridge)
    if method == "reduced":
        gammas = _rf_reduced(bank, n, k, ridge, max_iter)
    elif method == "nested":
        gammas = _rf_nested(bank, n, k, ridge, max_iter)
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")

    best = None
    for gamma in gammas:
        s = bank.sums(gamma)
        cands = []
        if s.z < k:
            cands.append(gamma * (k - s.z) / k)
        if s.z < n:
            cands.append(ridge / (n - s.z))
        for kappa in cands:
            if not kappa > 0:
                continue
            res = _rf_residuals(s, kappa, gamma, n, k, ridge)
            err = max(abs(res[0]), abs(res[1]))
            if best is None or err < best[0]:
                best = (err, kappa, gamma, s, res)
    if best is None or not best[0] <= tol:
        err = None if best is None else f"{best[0]:.2e}"
        raise ConvergenceError(f"RF residual {err} exceeds tolerance {tol:.1e} (n={n}, k={k}, ridge={ridge})")
    _, kappa, gamma, s, res = best
    return ImplicitConstants(kappa, gamma, s.z, s.q, res, n, k, ridge)


def _rf_reduced(bank, n, k, ridge, max_iter):
    # kappa = gamma (k - z)/k from the second equation; the first becomes
    # G(gamma) = z + ridge k/(gamma (k - z)) - n, decreasing where z < k
    def g_fun(gamma):
        z = bank.z(gamma)
        if z >= k:
            return math.inf
        return z + ridge * k / (gamma * (k - z)) - n

    hi = 4.0 * (bank.trace + ridge) / min(n, k)
    lo, hi = _bisect_decreasing(g_fun, hi, max_iter, _floor(bank))
    return (lo, hi)


def _rf_nested(bank, n, k, ridge, max_iter):
    # outer residual H(kappa) = k - z(gamma(kappa)) - k kappa/gamma(kappa),
    # inner gamma(kappa) from z(gamma) = n - ridge/kappa
    def inner(kappa):
        target = n - ridge / kappa
        if target >= bank.rank:
            return None
        return solve_level(bank, target, max_iter)

    def h_fun(kappa):
        gamma = inner(kappa)
        if gamma is None:
            return -math.inf
        return k - bank.z(gamma) - k * kappa / gamma

    lo = ridge / n * (1.0 + 1e-6)
    if not h_fun(lo) > 0:
        raise ConvergenceError("nested solve: lower bracket does not bound the root")
    hi = lo
    for _ in range(max_iter):
        hi *= 4.0
        if h_fun(hi) < 0:
            break
    else:
        raise ConvergenceError("nested solve: failed to bracket kappa from above")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        if not lo < mid < hi:
            break
        if h_fun(mid) > 0:
            lo = mid
        else:
            hi = mid
    return tuple(g for g in (inner(lo), inner(hi)) if g is not None)


def solve_ridgeless(ts, n, k, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> ImplicitConstants:
    """Zero-ridge limit of the RF constants.

    For ``n < k``, ``gamma`` solves ``z(gamma) = n`` and
    ``kappa = (k - n) gamma / k``.  For ``n > k``, ``gamma`` solves
    ``z(gamma) = k`` and ``kappa = 0`` (flagged by ``kappa_vanishes``).
    """
    n = _positive("n", n)
    k = _positive("k", k)
    if n == k:
        raise ThresholdSingularityError("ridgeless limit is singular at n == k")
    bank = ts.bank
    m = min(n, k)
    if bank.rank <= m:
        raise NoSolutionError(f"ridgeless limit needs more than min(n,k)={m} nonzero modes")
    gamma = solve_level(bank, m, max_iter)
    s = bank.sums(gamma)
    if n < k:
        kappa = (k - n) * gamma / k
        res = ((s.z - n) / n, (s.z + k * kappa / gamma - k) / k)
        vanish = False
    else:
        kappa = 0.0
        res = (0.0, (s.z - k) / k)
        vanish = True
    if not max(abs(res[0]), abs(res[1])) <= tol:
        raise ConvergenceError(f"ridgeless residual {res} exceeds tolerance {tol:.1e}")
    return ImplicitConstants(kappa, gamma, s.z, s.q, res, n, k, 0.0, vanish)


def constant_derivatives(c: ImplicitConstants) -> dict:
    """Closed-form sensitivities of ``(kappa, gamma)`` to ``n`` and ``k``.

    Obtained by implicit differentiation of the two RF equations with
    ``D = k kappa ridge + (z - q)(k kappa^2 + gamma ridge)``.

    Returns
    -------
    dict
        Keys ``dgamma_dk``, ``dkappa_dk``, ``dgamma_dn``, ``dkappa_dn``.
    """
    if math.isinf(c.k):
        raise InvalidArgumentError("derivatives are defined for finite k")
    kap, gam, d, k = c.kappa, c.gamma, c.ridge, c.k
    zq = c.z - c.q
    den = k * kap * d + zq * (k * kap * kap + gam * d)
    return {
        "dgamma_dk": -gam * (gam - kap) * d / den,
        "dkappa_dk": kap * kap * (gam - kap) * zq / den,
        "dgamma_dn": -k * gam * kap * kap / den,
        "dkappa_dn": -kap * kap * (k * kap + zq * gam) / den,
    }
