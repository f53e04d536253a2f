"""Concave nondecreasing utilities on the whole real line, normalized to U(0) = 0.

All ``eval``/derivative methods accept scalars or numpy arrays. ``U'`` means
the left derivative throughout; ``right_derivative`` is provided for the
subdifferential ``[U'_+(x), U'_-(x)]`` at kinks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import MalformedInput


class Utility:
    smooth = False
    piecewise_linear = False
    strictly_concave = False
    strictly_increasing = True

    # declared asymptotic-elasticity parameters (may be None)
    gamma: Optional[float] = None
    alpha: Optional[float] = None
    xtilde: Optional[float] = None

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        raise NotImplementedError

    def left_derivative(self, x):
        raise NotImplementedError

    def right_derivative(self, x):
        return self.left_derivative(x)

    def second_derivative(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no second derivative")

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _ae_dict(self) -> dict:
        return {k: v for k, v in (("gamma", self.gamma), ("alpha", self.alpha),
                                  ("xtilde", self.xtilde)) if v is not None}


def _out(x, y):
    return float(y) if np.ndim(x) == 0 else y


class Exponential(Utility):
    """U(x) = 1 - exp(-a x)."""

    smooth = True
    strictly_concave = True

    def __init__(self, a: float = 1.0, gamma=None, alpha=None, xtilde=None):
        if not a > 0:
            raise MalformedInput("exponential utility needs a > 0")
        self.a = float(a)
        self.gamma, self.alpha, self.xtilde = gamma, alpha, xtilde

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, -np.expm1(-self.a * x))

    def left_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, self.a * np.exp(-self.a * x))

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, -self.a * self.a * np.exp(-self.a * x))

    def to_dict(self):
        return {"variant": "exponential", "params": {"a": self.a}, "ae": self._ae_dict()}

    def __repr__(self):
        return f"Exponential(a={self.a})"


class LinearBelowPowerAbove(Utility):
    """U(x) = x for x <= 0 and ((1 + x)^g - 1) / g for x > 0.

    U' <= 1 everywhere, which bounds the density of the induced measure.
    """

    smooth = True

    def __init__(self, power: float = 0.5, gamma=None, alpha=None, xtilde=None):
        if not 0 < power < 1:
            raise MalformedInput("power must lie in (0, 1)")
        self.power = float(power)
        self.gamma, self.alpha, self.xtilde = gamma, alpha, xtilde

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        g = self.power
        pos = np.maximum(x, 0.0)
        return _out(x, np.where(x > 0, np.expm1(g * np.log1p(pos)) / g, x))

    def left_derivative(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.maximum(x, 0.0)
        return _out(x, np.where(x > 0, (1.0 + pos) ** (self.power - 1.0), 1.0))

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        g = self.power
        pos = np.maximum(x, 0.0)
        return _out(x, np.where(x > 0, (g - 1.0) * (1.0 + pos) ** (g - 2.0), 0.0))

    def to_dict(self):
        return {"variant": "linear_below_power_above", "params": {"gamma": self.power},
                "ae": self._ae_dict()}

    def __repr__(self):
        return f"LinearBelowPowerAbove({self.power})"


class ExponentialBelowLinearAbove(Utility):
    """U(x) = x for x >= 0 and (1 - exp(-a x)) / a for x < 0; C^1 at the origin.

    U' >= 1 everywhere, which bounds the density of the induced measure from below.
    """

    smooth = True

    def __init__(self, a: float = 1.0, gamma=None, alpha=None, xtilde=None):
        if not a > 0:
            raise MalformedInput("a must be positive")
        self.a = float(a)
        self.gamma, self.alpha, self.xtilde = gamma, alpha, xtilde

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        neg = np.minimum(x, 0.0)
        return _out(x, np.where(x < 0, -np.expm1(-self.a * neg) / self.a, x))

    def left_derivative(self, x):
        x = np.asarray(x, dtype=float)
        neg = np.minimum(x, 0.0)
        return _out(x, np.where(x <= 0, np.exp(-self.a * neg), 1.0))

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        neg = np.minimum(x, 0.0)
        return _out(x, np.where(x < 0, -self.a * np.exp(-self.a * neg), 0.0))

    def to_dict(self):
        return {"variant": "exponential_below_linear_above", "params": {"a": self.a},
                "ae": self._ae_dict()}

    def __repr__(self):
        return f"ExponentialBelowLinearAbove(a={self.a})"


class PiecewiseLinear(Utility):
    """Piecewise-linear utility through the origin.

    ``slopes`` has one more entry than ``breakpoints``: slopes[0] applies left of
    the first breakpoint, slopes[-1] right of the last.
    """

    piecewise_linear = True

    def __init__(self, breakpoints: Sequence[float], slopes: Sequence[float],
                 gamma=None, alpha=None, xtilde=None):
        b = np.asarray(breakpoints, dtype=float).reshape(-1)
        s = np.asarray(slopes, dtype=float).reshape(-1)
        if len(s) != len(b) + 1:
            raise MalformedInput("need len(slopes) == len(breakpoints) + 1")
        if np.any(np.diff(b) <= 0):
            raise MalformedInput("breakpoints must be strictly increasing")
        if np.any(s < 0):
            raise MalformedInput("slopes must be nonnegative")
        if np.any(np.diff(s) > 0):
            raise MalformedInput("slopes must be nonincreasing (concavity)")
        if not np.all(np.isfinite(b)) or not np.all(np.isfinite(s)):
            raise MalformedInput("breakpoints and slopes must be finite")
        self.breakpoints, self.slopes = b, s
        self.gamma, self.alpha, self.xtilde = gamma, alpha, xtilde
        self.strictly_increasing = bool(s[-1] > 0)
        self._knots, self._values = self._integrate(b, s)

    @staticmethod
    def _integrate(b, s):
        # knots = breakpoints plus 0; values accumulated outward from U(0) = 0
        if len(b) == 0:
            return np.array([0.0]), np.array([0.0])
        knots = np.union1d(b, [0.0])
        # slope on (knots[k-1], knots[k]] is the breakpoint-segment slope there
        seg = np.searchsorted(b, knots, side="left")
        k0 = int(np.searchsorted(knots, 0.0))
        vals = np.zeros(len(knots))
        for k in range(k0 + 1, len(knots)):
            vals[k] = vals[k - 1] + s[seg[k]] * (knots[k] - knots[k - 1])
        for k in range(k0 - 1, -1, -1):
            vals[k] = vals[k + 1] - s[seg[k + 1]] * (knots[k + 1] - knots[k])
        return knots, vals

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        kn, v = self._knots, self._values
        i = np.searchsorted(kn, x, side="right")
        j = np.clip(i - 1, 0, len(kn) - 1)
        slope = self.slopes[np.searchsorted(self.breakpoints, x, side="left")]
        # left of the first knot: extrapolate from knots[0] with the leftmost slope
        y = np.where(i == 0, v[0] + self.slopes[0] * (x - kn[0]), v[j] + slope * (x - kn[j]))
        return _out(x, y)

    def left_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, self.slopes[np.searchsorted(self.breakpoints, x, side="left")])

    def right_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return _out(x, self.slopes[np.searchsorted(self.breakpoints, x, side="right")])

    def to_dict(self):
        return {"variant": "piecewise_linear",
                "params": {"breakpoints": self.breakpoints.tolist(), "slopes": self.slopes.tolist()},
                "ae": self._ae_dict()}

    def __repr__(self):
        return f"PiecewiseLinear({len(self.breakpoints)} breakpoints)"


class Example73(PiecewiseLinear):
    """The non-attainment utility: U' = 1 + 1/n^2 on (n-1, n] for n >= 1 and
    U' = 3 - 1/n^2 on (n, n+1] for n <= -1, truncated to slopes 1 and 3 beyond +-N.
    """

    def __init__(self, N: int = 100, gamma=None, alpha=None, xtilde=None):
        N = int(N)
        if N < 1:
            raise MalformedInput("truncation depth N must be >= 1")
        self.N = N
        b = np.arange(-N, N + 1, dtype=float)
        s = [3.0]
        for k in range(-N + 1, 1):
            n = k - 1
            s.append(3.0 - 1.0 / (n * n))
        for k in range(1, N + 1):
            s.append(1.0 + 1.0 / (k * k))
        s.append(1.0)
        super().__init__(b, s, gamma=gamma, alpha=alpha, xtilde=xtilde)

    def to_dict(self):
        return {"variant": "example73", "params": {"N": self.N}, "ae": self._ae_dict()}

    def __repr__(self):
        return f"Example73(N={self.N})"


class Shifted(Utility):
    """x -> U(x + s) - U(s)."""

    def __init__(self, base: Utility, s: float):
        self.base, self.s = base, float(s)
        self.smooth = base.smooth
        self.piecewise_linear = base.piecewise_linear
        self.strictly_concave = base.strictly_concave
        self.strictly_increasing = base.strictly_increasing
        self._u0 = float(base.eval(self.s))

    def eval(self, x):
        return self.base.eval(np.asarray(x, dtype=float) + self.s) - self._u0

    def left_derivative(self, x):
        return self.base.left_derivative(np.asarray(x, dtype=float) + self.s)

    def right_derivative(self, x):
        return self.base.right_derivative(np.asarray(x, dtype=float) + self.s)

    def second_derivative(self, x):
        return self.base.second_derivative(np.asarray(x, dtype=float) + self.s)

    def to_dict(self):
        return {"variant": "shifted", "params": {"base": self.base.to_dict(), "shift": self.s}}


def shift(u: Utility, xtilde: float) -> Shifted:
    return Shifted(u, xtilde)


def linear(slope: float = 1.0) -> PiecewiseLinear:
    return PiecewiseLinear([], [slope])


_VARIANTS = {
    "exponential": lambda p: Exponential(p.get("a", 1.0)),
    "piecewise_linear": lambda p: PiecewiseLinear(p["breakpoints"], p["slopes"]),
    "example73": lambda p: Example73(p.get("N", 100)),
    "linear_below_power_above": lambda p: LinearBelowPowerAbove(p.get("gamma", 0.5)),
    "exponential_below_linear_above": lambda p: ExponentialBelowLinearAbove(p.get("a", 1.0)),
}


def utility_from_dict(data: dict) -> Utility:
    if not isinstance(data, dict) or "variant" not in data:
        raise MalformedInput("utility JSON needs a 'variant'")
    name = str(data["variant"]).lower()
    if name == "shifted":
        p = data.get("params", {})
        return Shifted(utility_from_dict(p["base"]), p["shift"])
    if name not in _VARIANTS:
        raise MalformedInput(f"unknown utility variant {data['variant']!r}")
    try:
        u = _VARIANTS[name](data.get("params") or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"bad utility params: {exc}") from None
    ae = data.get("ae") or {}
    u.gamma, u.alpha, u.xtilde = ae.get("gamma"), ae.get("alpha"), ae.get("xtilde")
    return u


# asymptotic elasticity checks ------------------------------------------

@dataclass
class CheckReport:
    passed: bool
    max_violation: float
    worst_x: float
    worst_lambda: float
    elasticity: float
    C: Optional[float] = None
    n_samples: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("passed", "max_violation", "worst_x", "worst_lambda", "elasticity", "C", "n_samples")}


def _grid(span, n):
    # geometric offsets cluster samples near the threshold, where violations show first
    return np.concatenate([[0.0], np.geomspace(1e-6, span, n - 1)])


def check_ae_plus(u: Utility, gamma: float, xtilde: float, n_x: int = 400, n_lambda: int = 200,
                  x_span: float = 1e4, lambda_max: float = 1e4, tol: float = 1e-12) -> CheckReport:
    """Sample U(lam x) <= lam^gamma U(x) on x >= xtilde, lam >= 1.

    ``max_violation`` is relative: (lhs - rhs) / max(1, |rhs|). ``C`` is U(xtilde),
    the constant for which U(lam x) <= lam U(x) + C lam^gamma and
    U(lam x) <= lam^gamma U(x) + C lam^gamma then hold for all x.
    """
    if not 0 < gamma < 1 or not xtilde > 0:
        raise ValueError("need gamma in (0,1) and xtilde > 0")
    xs = xtilde * (1.0 + _grid(x_span, n_x))
    lam = 1.0 + _grid(lambda_max, n_lambda)
    X, L = np.meshgrid(xs, lam, indexing="ij")
    lhs = u.eval(L * X)
    rhs = L ** gamma * u.eval(X)
    viol = (lhs - rhs) / np.maximum(1.0, np.abs(rhs))
    k = np.unravel_index(int(np.argmax(viol)), viol.shape)
    xe = xs[-1]
    ue = float(u.eval(xe))
    el = float(u.left_derivative(xe) * xe / ue) if ue != 0 else math.inf
    mv = float(viol[k])
    return CheckReport(mv <= tol, mv, float(X[k]), float(L[k]),
                       el, float(u.eval(xtilde)), viol.size)


def check_ae_minus(u: Utility, alpha: float, xtilde: float, n_x: int = 400, n_lambda: int = 200,
                   x_span: float = 1e2, lambda_max: float = 1e2, tol: float = 1e-12) -> CheckReport:
    """Sample U(lam x) <= lam^(1+alpha) U(x) on x <= xtilde, lam >= 1.

    The default spans are modest because utilities such as the exponential
    overflow quickly at minus infinity.
    """
    if not alpha > 0 or not xtilde <= 0:
        raise ValueError("need alpha > 0 and xtilde <= 0")
    base = xtilde if xtilde < 0 else -1e-3
    xs = base * (1.0 + _grid(x_span, n_x))
    lam = 1.0 + _grid(lambda_max, n_lambda)
    X, L = np.meshgrid(xs, lam, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore"):
        lhs = u.eval(L * X)
        rhs = L ** (1.0 + alpha) * u.eval(X)
        viol = np.where(np.isfinite(lhs) & np.isfinite(rhs),
                        (lhs - rhs) / np.maximum(1.0, np.abs(rhs)), -np.inf)
    k = np.unravel_index(int(np.argmax(viol)), viol.shape)
    finite = np.isfinite(u.eval(xs))
    xe = xs[finite][-1]
    ue = float(u.eval(xe))
    el = float(u.left_derivative(xe) * xe / ue) if ue != 0 else math.inf
    mv = float(viol[k])
    return CheckReport(mv <= tol, mv, float(X[k]), float(L[k]), el, None, viol.size)
