"""Leading-order closed forms for powerlaw tasks.

For ``lambda_i = i**-alpha`` and ``v_i**2 = i**-beta`` the mode sums have
continuum approximations, and the optimal-ridge test risk can be written
as a function of the fitting ratio ``R = E_train/E_test`` alone.  All
values here are leading order in ``n``; :func:`error_exponent` gives the
decay rate of the neglected corrections.
"""
from dataclasses import dataclass
import enum
import math
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .spectrum import PowerlawTask

SINGULAR_WINDOW = 1e-6
RATIO_CURVE_MAX = 0.99


def _check_alpha(alpha):
    alpha = float(alpha)
    if not (math.isfinite(alpha) and alpha > 1):
        raise InvalidArgumentError(f"alpha must be > 1, got {alpha}")
    return alpha


def _check_beta(alpha, beta):
    beta = float(beta)
    if not (math.isfinite(beta) and 1 < beta < 2 * alpha + 1):
        raise InvalidArgumentError(f"beta must lie in (1, 2*alpha+1), got {beta}")
    return beta


def learn_constant(alpha: float) -> float:
    """``pi/(alpha sin(pi/alpha))``, the constant of the first mode sum."""
    alpha = _check_alpha(alpha)
    return math.pi / (alpha * math.sin(math.pi / alpha))


def singular_fraction(alpha: float, beta: float) -> float:
    """``(alpha - beta + 1)/sin(pi (beta - 1)/alpha)`` with the removable
    singularity at ``beta = alpha + 1`` filled in.

    Near ``beta = alpha + 1`` (within ``1e-6``) the fraction is evaluated by
    its series ``(alpha/pi) (1 + x^2/6 + 7 x^4/360)`` with
    ``x = pi (beta - alpha - 1)/alpha``; the limit value is ``alpha/pi``.
    """
    eps = beta - alpha - 1.0
    if abs(eps) < SINGULAR_WINDOW:
        x = math.pi * eps / alpha
        return alpha / math.pi * (1.0 + x * x / 6.0 + 7.0 * x ** 4 / 360.0)
    return (alpha - beta + 1.0) / math.sin(math.pi * (beta - 1.0) / alpha)


def continuum_sums(alpha, kappa, beta=None):
    """Continuum approximations of the three powerlaw mode sums at ``kappa``.

    Returns
    -------
    tuple
        ``(sum L, sum L^2, sum (1-L)^2 v^2)`` with ``L = lam/(lam+kappa)``.
        The third entry is None when ``beta`` is not given.  Valid for
        ``kappa << 1``; relative corrections are ``O(kappa**(1/alpha))``.
    """
    alpha = _check_alpha(alpha)
    if not kappa > 0:
        raise InvalidArgumentError("kappa must be > 0")
    root = kappa ** (-1.0 / alpha)
    s1 = learn_constant(alpha) * root
    s2 = math.pi * (alpha - 1.0) / (alpha ** 2 * math.sin(math.pi / alpha)) * root
    if beta is None:
        return s1, s2, None
    beta = _check_beta(alpha, beta)
    s3 = math.pi * singular_fraction(alpha, beta) / alpha ** 2 * kappa ** ((beta - 1.0) / alpha)
    return s1, s2, s3


def null_kappa(alpha, n) -> float:
    """Ridgeless KRR ``kappa`` for a powerlaw spectrum, ``(pi/(alpha sin(pi/alpha)))^alpha n^-alpha``."""
    alpha = _check_alpha(alpha)
    if not n >= 1:
        raise InvalidArgumentError("n must be >= 1")
    return learn_constant(alpha) ** alpha * float(n) ** -alpha


def null_risk_prefactor(alpha, beta) -> float:
    alpha = _check_alpha(alpha)
    beta = _check_beta(alpha, beta)
    return (math.pi ** beta * singular_fraction(alpha, beta)
            / (alpha ** beta * math.sin(math.pi / alpha) ** (beta - 1.0)))


def null_risk(task: PowerlawTask, n) -> float:
    """Zero-noise, zero-ridge KRR test risk ``C(alpha, beta) n^-(beta-1)``."""
    if not n > 0:
        raise InvalidArgumentError("n must be > 0")
    return null_risk_prefactor(task.alpha, task.beta) * float(n) ** -(task.beta - 1.0)


def scaled_noise(task: PowerlawTask, n) -> float:
    """Noise variance for relative noise ``s_rel_sq`` at sample size ``n``."""
    if task.s_rel_sq == 0:
        return 0.0
    return task.s_rel_sq * null_risk(task, n)


def _check_ratio(ratio):
    ratio = float(ratio)
    if not (0 <= ratio < 1):
        raise InvalidArgumentError(f"fitting ratio must lie in [0, 1), got {ratio}")
    return ratio


def risk_of_ratio(task: PowerlawTask, n, ratio, scale: float = 1.0) -> float:
    """Leading-order test risk at fitting ratio ``ratio``.

    ``scale * C n^-(beta-1) (alpha s^2 + (1-r)^-(beta-1)) / (1 + (alpha-1) r)``
    with ``r = sqrt(ratio)`` and ``C`` the null-risk prefactor.
    """
    r = math.sqrt(_check_ratio(ratio))
    a, b = task.alpha, task.beta
    shape = (a * task.s_rel_sq + (1.0 - r) ** -(b - 1.0)) / (1.0 + (a - 1.0) * r)
    return scale * null_risk(task, n) * shape


def noise_dominated_risk(task: PowerlawTask, n, ratio) -> float:
    """Large-noise form ``alpha s^2 C n^-(beta-1) / (1 + (alpha-1) sqrt(R))``."""
    r = math.sqrt(_check_ratio(ratio))
    return task.alpha * task.s_rel_sq * null_risk(task, n) / (1.0 + (task.alpha - 1.0) * r)


def kappa_of_ratio(alpha, n, ratio) -> float:
    """Leading-order ``kappa`` at fitting ratio ``ratio``:
    ``(pi/(alpha sin(pi/alpha)))^alpha n^-alpha (1 - sqrt(R))^-alpha``."""
    r = math.sqrt(_check_ratio(ratio))
    return null_kappa(alpha, n) * (1.0 - r) ** -_check_alpha(alpha)


def ratio_of_kappa(alpha, n, kappa) -> float:
    """Inverse of :func:`kappa_of_ratio`: ``(1 - A kappa^(-1/alpha)/n)^2``.

    Only meaningful for ``kappa >= null_kappa(alpha, n)``.
    """
    s1 = continuum_sums(alpha, kappa)[0]
    r = 1.0 - s1 / float(n)
    if r < -1e-12:
        raise InvalidArgumentError("kappa below the ridgeless value")
    return max(r, 0.0) ** 2


class Branch(str, enum.Enum):
    INTERIOR_ROOT = "interior_root"
    BOUNDARY_ZERO = "boundary_zero"


@dataclass(frozen=True)
class OptimalRatioResult:
    """Optimal fitting ratio ``ratio_star = r_star**2`` and how it was found."""

    r_star: float
    ratio_star: float
    branch: Branch
    error_exponent: float


def error_exponent(alpha, beta) -> float:
    """Decay exponent ``min(1, 2 alpha + 1 - beta)`` of the leading-order corrections."""
    return min(1.0, 2.0 * alpha + 1.0 - beta)


def optimal_ratio_equation(task: PowerlawTask, r):
    """Left side of the stationarity condition for ``r = sqrt(R)``; strictly decreasing."""
    a, b, s = task.alpha, task.beta, task.s_rel_sq
    return a - b - (a - 1.0) * b * r + a * (a - 1.0) * (1.0 - r) ** b * s


def optimal_ratio(task: PowerlawTask) -> OptimalRatioResult:
    """Fitting ratio minimizing :func:`risk_of_ratio`.

    Examples
    --------
    >>> round(optimal_ratio(PowerlawTask(2.0, 1.5)).ratio_star, 12)
    0.111111111111
    """
    f = lambda r: optimal_ratio_equation(task, r)
    gexp = error_exponent(task.alpha, task.beta)
    f0 = f(0.0)
    if f0 <= 0:
        return OptimalRatioResult(0.0, 0.0, Branch.BOUNDARY_ZERO, gexp)
    # f(1) = alpha (1 - beta) < 0, so a root lies inside [0, 1)
    lo, hi = 0.0, 1.0
    grid = np.linspace(0.0, 1.0, 33)
    vals = [f(x) for x in grid]
    if np.any(np.diff(vals) >= 0):
        raise AssertionError("optimal-ratio equation is not strictly decreasing")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    return OptimalRatioResult(r, r * r, Branch.INTERIOR_ROOT, gexp)


def interpolation_threshold(alpha, beta) -> float:
    """Largest relative noise at which interpolation (``R* = 0``) is optimal.

    Negative values mean interpolation is never optimal.
    """
    alpha = _check_alpha(alpha)
    return (float(beta) - alpha) / (alpha * (alpha - 1.0))


def suboptimality_constant(alpha) -> float:
    """``(alpha-1)^2/(2 alpha^2)``, the proven log-convexity constant."""
    alpha = _check_alpha(alpha)
    return (alpha - 1.0) ** 2 / (2.0 * alpha ** 2)


def suboptimality_bound(task: PowerlawTask, ratio, ratio_star) -> float:
    """Lower bound ``1 + C (sqrt(R) - sqrt(R*))^2`` on ``E_test/E_test*``."""
    r = math.sqrt(_check_ratio(ratio))
    rs = math.sqrt(_check_ratio(ratio_star))
    return 1.0 + suboptimality_constant(task.alpha) * (r - rs) ** 2


@dataclass(frozen=True)
class RatioCurve:
    """Predicted test risk sampled over fitting ratios."""

    task: PowerlawTask
    n: float
    ratios: np.ndarray
    e_test: np.ndarray
    scale: float = 1.0

    def rows(self):
        return list(zip(self.ratios.tolist(), self.e_test.tolist()))


def ratio_curve(task: PowerlawTask, n, ratios=None, scale: float = 1.0) -> RatioCurve:
    """Sample :func:`risk_of_ratio` on ``ratios`` (default ``0, 0.01, ..., 0.99``)."""
    if ratios is None:
        ratios = np.round(np.arange(0, 100) / 100.0, 2)
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.size == 0 or np.any(np.diff(ratios) <= 0):
        raise InvalidArgumentError("ratios must be non-empty and strictly increasing")
    if ratios[0] < 0 or ratios[-1] > RATIO_CURVE_MAX:
        raise InvalidArgumentError(f"ratios must lie in [0, {RATIO_CURVE_MAX}]")
    e = np.array([risk_of_ratio(task, n, r, scale) for r in ratios])
    return RatioCurve(task, float(n), ratios, e, float(scale))


def fit_prefactor(task: PowerlawTask, n, measured_at_zero: float) -> float:
    """Multiplicative prefactor anchoring the curve to a measured risk at ``R = 0``."""
    return float(measured_at_zero) / risk_of_ratio(task, n, 0.0)
