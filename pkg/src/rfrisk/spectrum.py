"""Task eigenstructures, powerlaw generators and tail-aware mode sums.

A :class:`TaskEigenstructure` holds ``M`` explicit modes and optionally an
analytic powerlaw tail ``lambda_i = i**-alpha``, ``v_i**2 = i**-beta`` for
``i > M``.  All sums over modes go through a :class:`ModeBank`, a fixed set
of weighted nodes:

* explicit modes with weight 1 (the powerlaw is materialized explicitly up
  to index ``MIN_EXPLICIT`` so the remaining tail is smooth on the integer
  grid),
* Gauss-Legendre nodes on unit panels in ``log x`` covering
  ``[a - 1/2, x_far]`` with ``a`` the first non-explicit index,
* two endpoint nodes carrying the midpoint Euler-Maclaurin correction
  ``f'(a - 1/2)/24 ~ (f(a) - f(a-1))/24``,
* a convergent far-field series for ``x > x_far`` evaluated per call.

Every sum therefore costs one fused pass over a few thousand nodes
regardless of how long the tail is.
"""
from dataclasses import dataclass, field
from functools import cached_property
import json
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _sums
from .errors import DivergentSumError, InvalidArgumentError, NumericalError

MIN_EXPLICIT = 1000
GL_ORDER = 16
PANEL_WIDTH = 1.0       # in log x
FAR_EIGENVALUE = 1e-40  # eigenvalue at which the far-field series takes over
FAR_TERMS = 64


@dataclass(frozen=True)
class PowerlawTail:
    """Modes ``i >= start`` continue as ``i**-alpha`` and ``i**-beta``."""

    alpha: float
    beta: float
    start: int

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 1):
            raise InvalidArgumentError(f"tail alpha must be > 1, got {self.alpha}")
        if not math.isfinite(self.beta):
            raise InvalidArgumentError("tail beta must be finite")
        if int(self.start) != self.start or self.start < 1:
            raise InvalidArgumentError(f"tail start must be a positive integer, got {self.start}")
        object.__setattr__(self, "start", int(self.start))


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TaskEigenstructure:
    """Eigenvalues, squared target coefficients and label noise of a task.

    Parameters
    ----------
    eigenvalues : array_like
        Non-increasing, nonnegative kernel eigenvalues of the explicit modes.
    coeffs_sq : array_like
        Squared target eigencoefficients, same length.
    noise_var : float
        Label noise variance.
    tail : PowerlawTail, optional
        Analytic continuation of the spectrum past the explicit modes.
    scale : float
        Multiplies every target coefficient, explicit and tail alike.
    """

    eigenvalues: np.ndarray
    coeffs_sq: np.ndarray
    noise_var: float = 0.0
    tail: Optional[PowerlawTail] = None
    scale: float = 1.0

    def __post_init__(self):
        lam = _readonly(self.eigenvalues)
        vsq = _readonly(self.coeffs_sq)
        if lam.shape != vsq.shape:
            raise InvalidArgumentError("eigenvalues and coeffs_sq must have equal length")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(vsq))):
            raise InvalidArgumentError("eigenvalues and coeffs_sq must be finite")
        if np.any(lam < 0) or np.any(vsq < 0):
            raise InvalidArgumentError("eigenvalues and coeffs_sq must be nonnegative")
        if lam.size > 1 and np.any(np.diff(lam) > 0):
            raise InvalidArgumentError("eigenvalues must be sorted non-increasing")
        noise = float(self.noise_var)
        if not (math.isfinite(noise) and noise >= 0):
            raise InvalidArgumentError(f"noise_var must be finite and >= 0, got {self.noise_var}")
        scale = float(self.scale)
        if not (math.isfinite(scale) and scale >= 0):
            raise InvalidArgumentError(f"scale must be finite and >= 0, got {self.scale}")
        if self.tail is not None and self.tail.start != lam.size + 1:
            raise InvalidArgumentError(
                f"tail must start at index M+1={lam.size + 1}, got {self.tail.start}")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "coeffs_sq", vsq)
        object.__setattr__(self, "noise_var", noise)
        object.__setattr__(self, "scale", scale)

    @property
    def modes(self) -> int:
        return int(self.eigenvalues.size)

    @cached_property
    def bank(self) -> "ModeBank":
        return ModeBank(self)

    def with_noise(self, noise_var) -> "TaskEigenstructure":
        return TaskEigenstructure(self.eigenvalues, self.coeffs_sq, noise_var, self.tail, self.scale)

    def with_scale(self, scale) -> "TaskEigenstructure":
        return TaskEigenstructure(self.eigenvalues, self.coeffs_sq, self.noise_var, self.tail, scale)

    def to_dict(self) -> dict:
        tail = None
        if self.tail is not None:
            tail = {"alpha": self.tail.alpha, "beta": self.tail.beta, "start": self.tail.start}
        return {"eigenvalues": self.eigenvalues.tolist(), "coeffs_sq": self.coeffs_sq.tolist(),
                "noise_var": self.noise_var, "tail": tail, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "TaskEigenstructure":
        try:
            tail = d.get("tail")
            if tail is not None:
                tail = PowerlawTail(float(tail["alpha"]), float(tail["beta"]), int(tail["start"]))
            return cls(d["eigenvalues"], d["coeffs_sq"], float(d.get("noise_var", 0.0)),
                       tail, float(d.get("scale", 1.0)))
        except (KeyError, TypeError) as exc:
            raise InvalidArgumentError(f"malformed TaskEigenstructure: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TaskEigenstructure":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PowerlawTask:
    """Powerlaw task ``lambda_i = i**-alpha``, ``v_i**2 = i**-beta`` for ``i >= i0``.

    ``s_rel_sq`` is the noise level in units of the zero-noise ridgeless
    test risk at the same ``n`` (see :func:`rfrisk.powerlaw.scaled_noise`).
    """

    alpha: float
    beta: float
    i0: int = 1
    s_rel_sq: float = 0.0
    head_overrides: Optional[Sequence] = field(default=None)

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (math.isfinite(a) and a > 1):
            raise InvalidArgumentError(f"alpha must be > 1, got {self.alpha}")
        if not (math.isfinite(b) and 1 < b < 2 * a + 1):
            raise InvalidArgumentError(f"beta must lie in (1, 2*alpha+1), got {self.beta}")
        if int(self.i0) != self.i0 or self.i0 < 1:
            raise InvalidArgumentError(f"i0 must be a positive integer, got {self.i0}")
        s = float(self.s_rel_sq)
        if not (math.isfinite(s) and s >= 0):
            raise InvalidArgumentError(f"s_rel_sq must be >= 0, got {self.s_rel_sq}")
        head = self.head_overrides
        if head is not None:
            head = tuple((float(l), float(v)) for l, v in head)
            if len(head) != int(self.i0) - 1:
                raise InvalidArgumentError("head_overrides must have length i0 - 1")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "i0", int(self.i0))
        object.__setattr__(self, "s_rel_sq", s)
        object.__setattr__(self, "head_overrides", head)

    def to_dict(self) -> dict:
        head = None if self.head_overrides is None else [list(p) for p in self.head_overrides]
        return {"alpha": self.alpha, "beta": self.beta, "i0": self.i0,
                "s_rel_sq": self.s_rel_sq, "head_overrides": head}

    @classmethod
    def from_dict(cls, d: dict) -> "PowerlawTask":
        try:
            return cls(d["alpha"], d["beta"], d.get("i0", 1), d.get("s_rel_sq", 0.0),
                       d.get("head_overrides"))
        except (KeyError, TypeError) as exc:
            raise InvalidArgumentError(f"malformed PowerlawTask: {exc}") from exc


def make_powerlaw_structure(task: PowerlawTask, modes: int, tail: bool = True) -> TaskEigenstructure:
    """Explicit powerlaw modes ``1..M`` plus (by default) the analytic tail.

    Noise is left at zero; it depends on ``n`` and is set later with
    :func:`rfrisk.powerlaw.scaled_noise`.

    Examples
    --------
    >>> ts = make_powerlaw_structure(PowerlawTask(2.0, 1.5), 2, tail=False)
    >>> ts.eigenvalues.tolist()
    [1.0, 0.25]
    """
    if int(modes) != modes or modes < 1:
        raise InvalidArgumentError(f"modes must be a positive integer, got {modes}")
    modes = int(modes)
    if modes < task.i0:
        raise InvalidArgumentError(f"modes={modes} must be >= i0={task.i0}")
    i = np.arange(1, modes + 1, dtype=np.float64)
    lam = i ** -task.alpha
    vsq = i ** -task.beta
    if task.head_overrides:
        for j, (l, v) in enumerate(task.head_overrides):
            lam[j], vsq[j] = l, v
    desc = PowerlawTail(task.alpha, task.beta, modes + 1) if tail else None
    return TaskEigenstructure(lam, vsq, 0.0, desc)


class EigenSums(NamedTuple):
    """Mode sums at one regularizer value ``gamma``.

    ``z = sum L``, ``q = sum L^2``, ``b1 = sum G v^2``, ``b2 = sum G^2 v^2``,
    ``c1 = sum lam v^2/(lam+gamma)^2`` and ``s0 = sum v^2``, where
    ``L = lam/(lam+gamma)`` and ``G = 1 - L``.  Coefficients include the
    structure's ``scale``.
    """

    z: float
    q: float
    b1: float
    b2: float
    c1: float
    s0: float


def _far_series_coeffs(p, m, alpha):
    # integral_x^inf t^-p (1 + c t^-alpha)^-m dt
    #   = x^(1-p)/(p-1) * sum_j coef_m(j) s/(s+j) (-u)^j,  u = c x^-alpha
    s = (p - 1.0) / alpha
    j = np.arange(FAR_TERMS, dtype=np.float64)
    if m == 1:
        cm = np.ones_like(j)
    elif m == 2:
        cm = j + 1.0
    else:
        raise ValueError(m)
    return cm * s / (s + j)


class ModeBank:
    """Weighted node set representing every mode of a structure.

    Not constructed directly; use ``ts.bank``.
    """

    def __init__(self, ts: TaskEigenstructure):
        lam = ts.eigenvalues
        vsq = ts.coeffs_sq * ts.scale
        self.explicit_modes = lam.size
        self.scale = ts.scale
        self.tail = ts.tail
        self.rank = float(np.count_nonzero(lam > 0))
        w = np.ones_like(lam)
        if ts.tail is None:
            self.lam, self.vsq, self.w = np.ascontiguousarray(lam), np.ascontiguousarray(vsq), w
            self.s0 = float(np.sum(vsq))
            self.trace = float(np.sum(lam))
            self.remainder = 0.0
            return
        a_, b_ = ts.tail.alpha, ts.tail.beta
        if b_ <= 1:
            raise DivergentSumError(f"tail beta={b_} <= 1: target power diverges")
        self.rank = math.inf
        # materialize the tail explicitly up to MIN_EXPLICIT
        m0 = lam.size
        if m0 < MIN_EXPLICIT:
            extra = np.arange(m0 + 1, MIN_EXPLICIT + 1, dtype=np.float64)
            lam = np.concatenate([lam, extra ** -a_])
            vsq = np.concatenate([vsq, ts.scale * extra ** -b_])
            w = np.ones_like(lam)
        a = lam.size + 1
        x_far = max(float(a) * math.e ** 4, FAR_EIGENVALUE ** (-1.0 / a_))
        t0, t1 = math.log(a - 0.5), math.log(x_far)
        panels = max(1, math.ceil((t1 - t0) / PANEL_WIDTH))
        t1 = t0 + panels * PANEL_WIDTH
        x_far = math.exp(t1)
        gx, gw = np.polynomial.legendre.leggauss(GL_ORDER)
        h = PANEL_WIDTH
        lefts = t0 + h * np.arange(panels)
        t = (lefts[:, None] + 0.5 * h * (gx[None, :] + 1.0)).ravel()
        wt = np.tile(0.5 * h * gw, panels)
        xq = np.exp(t)
        wq = wt * xq
        # midpoint Euler-Maclaurin endpoint correction f'(a-1/2)/24
        xe = np.array([float(a), float(a - 1)])
        we = np.array([1.0 / 24.0, -1.0 / 24.0])
        xn = np.concatenate([xq, xe])
        self.lam = np.ascontiguousarray(np.concatenate([lam, xn ** -a_]))
        self.vsq = np.ascontiguousarray(np.concatenate([vsq, ts.scale * xn ** -b_]))
        self.w = np.ascontiguousarray(np.concatenate([w, wq, we]))
        self.x_far = x_far
        self.lam_far = x_far ** -a_
        self.alpha, self.beta = a_, b_
        # per-sum (prefactor exponent of 1/gamma, x^(1-p)/(p-1), series coeffs)
        def head(p):
            return x_far ** (1.0 - p) / (p - 1.0)
        self._far_terms = {
            "z": (1, head(a_), _far_series_coeffs(a_, 1, a_)),
            "q": (2, head(2 * a_), _far_series_coeffs(2 * a_, 2, a_)),
            "b1": (0, ts.scale * head(b_), _far_series_coeffs(b_, 1, a_)),
            "b2": (0, ts.scale * head(b_), _far_series_coeffs(b_, 2, a_)),
            "c1": (2, ts.scale * head(a_ + b_), _far_series_coeffs(a_ + b_, 2, a_)),
        }
        self.s0 = float(self.w @ self.vsq) + ts.scale * head(b_)
        self.trace = float(self.w @ self.lam) + head(a_)
        # size of the first neglected Euler-Maclaurin term for i**-beta
        self.remainder = ts.scale * 7.0 / 5760.0 * b_ * (b_ + 1) * (b_ + 2) * (a - 0.5) ** (-b_ - 3)

    @property
    def has_tail(self) -> bool:
        return self.tail is not None

    def _powers(self, gamma):
        u = self.lam_far / gamma
        if u > 0.5:
            raise NumericalError(
                f"regularizer {gamma:.3e} is below the resolved tail range (min {2 * self.lam_far:.1e})")
        return (-u) ** np.arange(FAR_TERMS, dtype=np.float64)

    def _far(self, name, pw, gamma):
        k, h, c = self._far_terms[name]
        return h * float(c @ pw) / gamma ** k

    def z(self, gamma: float) -> float:
        """``sum_i lam_i/(lam_i+gamma)`` over all modes."""
        val = _sums.weighted_z(self.lam, self.w, gamma)
        if self.tail is not None:
            val += self._far("z", self._powers(gamma), gamma)
        return val

    def sums(self, gamma: float) -> EigenSums:
        z, q, b1, b2, c1 = _sums.weighted_sums(self.lam, self.vsq, self.w, gamma)
        if self.tail is not None:
            pw = self._powers(gamma)
            z += self._far("z", pw, gamma)
            q += self._far("q", pw, gamma)
            b1 += self._far("b1", pw, gamma)
            b2 += self._far("b2", pw, gamma)
            c1 += self._far("c1", pw, gamma)
        return EigenSums(z, q, b1, b2, c1, self.s0)

    def explicit_learnabilities(self, gamma: float) -> np.ndarray:
        lam = self.lam[:self.explicit_modes]
        return lam / (lam + gamma)


def total_power_with_remainder(ts: TaskEigenstructure):
    """``(sum_i v_i^2 + sigma^2, remainder bound)`` including any tail.

    The bound is the magnitude of the first neglected Euler-Maclaurin term
    and is zero without a tail.
    """
    bank = ts.bank
    return bank.s0 + ts.noise_var, bank.remainder


def total_power(ts: TaskEigenstructure) -> float:
    """Total target power ``sum_i v_i^2 + sigma^2`` including any analytic tail.

    Examples
    --------
    >>> total_power(TaskEigenstructure([1.0, 0.5], [1.0, 0.25], 0.5))
    1.75
    """
    return total_power_with_remainder(ts)[0]
