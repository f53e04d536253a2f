"""Piecewise-linear concave nondecreasing functions.

These are the stored form of the value functions: breakpoints, values at the
breakpoints, and one extrapolation slope at each end.
"""
from __future__ import annotations

import io
from typing import List, Sequence, Tuple

import numpy as np

from .errors import NotConcaveOnGrid
from .utility import Utility

SLOPE_TOL = 1e-9


class PLConcave:
    __slots__ = ("x", "v", "left_slope", "right_slope", "_slopes")

    def __init__(self, x: Sequence[float], v: Sequence[float], left_slope: float = None,
                 right_slope: float = None, check: bool = True):
        x = np.asarray(x, dtype=float).reshape(-1)
        v = np.asarray(v, dtype=float).reshape(-1)
        if len(x) != len(v) or len(x) == 0:
            raise ValueError("breakpoints and values must be nonempty and of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("breakpoints and values must be finite")
        seg = np.diff(v) / np.diff(x)
        if left_slope is None:
            left_slope = seg[0] if len(seg) else 0.0
        if right_slope is None:
            right_slope = seg[-1] if len(seg) else 0.0
        self.x, self.v = x, v
        self.left_slope, self.right_slope = float(left_slope), float(right_slope)
        self._slopes = np.concatenate([[self.left_slope], seg, [self.right_slope]])
        if check:
            self.check()

    @property
    def slopes(self) -> np.ndarray:
        """Slopes of the m+1 linear pieces, left extrapolation first."""
        return self._slopes

    def check(self, tol: float = SLOPE_TOL) -> None:
        s = self._slopes
        scale = max(1.0, float(np.max(np.abs(s))))
        if np.any(np.diff(s) > tol * scale):
            k = int(np.argmax(np.diff(s)))
            raise NotConcaveOnGrid(f"slope increases from {s[k]!r} to {s[k + 1]!r} near x={self.x[min(k, len(self.x) - 1)]!r}")
        if np.any(s < -tol * scale):
            raise NotConcaveOnGrid(f"negative slope {float(np.min(s))!r}")

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        xs = np.asarray(x, dtype=float)
        y = np.interp(xs, self.x, self.v)
        y = np.where(xs < self.x[0], self.v[0] + self.left_slope * (xs - self.x[0]), y)
        y = np.where(xs > self.x[-1], self.v[-1] + self.right_slope * (xs - self.x[-1]), y)
        return float(y) if xs.ndim == 0 else y

    def left_derivative(self, x):
        xs = np.asarray(x, dtype=float)
        s = self._slopes[np.searchsorted(self.x, xs, side="left")]
        return float(s) if xs.ndim == 0 else s

    def right_derivative(self, x):
        xs = np.asarray(x, dtype=float)
        s = self._slopes[np.searchsorted(self.x, xs, side="right")]
        return float(s) if xs.ndim == 0 else s

    def sup_lines(self, tol: float = 1e-12) -> List[Tuple[float, float]]:
        """Lines (a, b) with f(x) = min_k a x + b everywhere; collinear pieces merged."""
        s = self._slopes
        # anchor piece k at the breakpoint bounding it
        anchors = np.concatenate([[0], np.arange(len(self.x) - 1), [len(self.x) - 1]])
        out: List[Tuple[float, float]] = []
        for a, k in zip(s, anchors):
            b = self.v[k] - a * self.x[k]
            if out and abs(out[-1][0] - a) <= tol * max(1.0, abs(a)) and \
                    abs(out[-1][1] - b) <= tol * max(1.0, abs(b)):
                continue
            out.append((float(a), float(b)))
        return out

    def lines_array(self) -> Tuple[np.ndarray, np.ndarray]:
        lines = self.sup_lines()
        return np.array([a for a, _ in lines]), np.array([b for _, b in lines])

    def shifted(self, dx: float) -> "PLConcave":
        """x -> f(x + dx)."""
        return PLConcave(self.x - dx, self.v, self.left_slope, self.right_slope, check=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,f\n")
        for a, b in zip(self.x, self.v):
            buf.write(f"{float(a)!r},{float(b)!r}\n")
        return buf.getvalue()

    def __repr__(self):
        return f"PLConcave({len(self.x)} breakpoints on [{self.x[0]:g}, {self.x[-1]:g}])"


def eval_pl(f: PLConcave, x):
    return f.eval(x)


def sup_lines(f: PLConcave):
    return f.sup_lines()


def from_utility(u: Utility, grid: Sequence[float]) -> PLConcave:
    """Interpolate ``u`` at the grid points.

    Beyond the ends the extension uses one-sided difference quotients of ``u``
    over one grid spacing, clamped so the result stays concave and monotone.
    """
    g = np.asarray(grid, dtype=float).reshape(-1)
    if len(g) < 2 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing with at least 2 points")
    v = np.asarray(u.eval(g), dtype=float)
    seg = np.diff(v) / np.diff(g)
    h0, h1 = g[1] - g[0], g[-1] - g[-2]
    left = (v[0] - float(u.eval(g[0] - h0))) / h0
    right = (float(u.eval(g[-1] + h1)) - v[-1]) / h1
    left = max(left, seg[0])
    right = min(max(right, 0.0), seg[-1])
    return PLConcave(g, v, left, right)
