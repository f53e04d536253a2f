"""Pricing measures read off the optimal terminal wealth, and indifference prices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .config import Config, default_config
from .engine import PathProblem, SolveResult, solve_path
from .errors import ArbitrageDetected, BoundaryOptimum, BracketFailure, MalformedInput, ZeroDerivative
from .geometry import validate_tree
from .tree import ScenarioTree
from .utility import Utility


@dataclass
class MeasureReport:
    density: Dict[int, float]
    leaf_Q: Dict[int, float]
    residuals: Dict[int, np.ndarray]
    density_bounds: Tuple[float, float]
    normalizer: float  # E[U'(V_T)] under P
    max_residual: float
    method: str  # "derivative" or "subdifferential"
    passed: bool
    fo_tol: float = 1e-6

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "passed": self.passed,
            "max_residual": self.max_residual,
            "fo_tol": self.fo_tol,
            "normalizer": self.normalizer,
            "density_bounds": list(self.density_bounds),
            "density": {str(k): self.density[k] for k in sorted(self.density)},
            "leaf_Q": {str(k): self.leaf_Q[k] for k in sorted(self.leaf_Q)},
            "residuals": {str(k): self.residuals[k].tolist() for k in sorted(self.residuals)},
        }


def _terminal(result: SolveResult, tree: ScenarioTree) -> Tuple[list, np.ndarray, np.ndarray]:
    leaves = list(tree.leaves)
    x = np.array([result.wealth[leaf] - result.leaf_shift.get(leaf, 0.0) for leaf in leaves])
    pp = tree.path_probs
    return leaves, x, np.array([pp[leaf] for leaf in leaves])


def conditional_means(tree: ScenarioTree, leaf_Q: Mapping[int, float]) -> Dict[int, np.ndarray]:
    """E_Q[S_{t+1} - S_t | node] for every interior node."""
    mass = dict(leaf_Q)
    for n in reversed(tree.order):
        if not tree.is_leaf(n):
            mass[n] = sum(mass[ch] for ch in tree.children(n))
    out = {}
    for n in tree.interior:
        s0 = tree.prices(n)
        acc = np.zeros(tree.d)
        for ch in tree.children(n):
            acc += mass[ch] * (tree.prices(ch) - s0)
        out[n] = acc / mass[n] if mass[n] > 0 else acc
    return out


def _rays(result: SolveResult, d: int) -> Optional[np.ndarray]:
    return None if result.cone is None else np.asarray(result.cone, dtype=float)


def _select_subgradients(tree, leaves, pi, lo, hi, result: SolveResult, tol: float):
    """Find s in [lo, hi] with every node's first-order condition exactly satisfied."""
    idx = {leaf: i for i, leaf in enumerate(leaves)}
    R = _rays(result, tree.d)
    A_eq, A_ub = [], []
    for n in tree.interior:
        rows = np.zeros((tree.d, len(leaves)))
        s0 = tree.prices(n)
        for ch in tree.children(n):
            dS = tree.prices(ch) - s0
            for leaf in tree.subtree(ch):
                if leaf in idx:
                    rows[:, idx[leaf]] += pi[idx[leaf]] * dS
        if R is None:
            A_eq.extend(rows)
        else:
            lam = result.coords[n]
            for r, lr in zip(R, lam):
                (A_eq if lr > tol else A_ub).append(r @ rows)
    res = linprog(np.zeros(len(leaves)),
                  A_ub=np.array(A_ub) if A_ub else None, b_ub=np.zeros(len(A_ub)) if A_ub else None,
                  A_eq=np.array(A_eq) if A_eq else None, b_eq=np.zeros(len(A_eq)) if A_eq else None,
                  bounds=list(zip(lo, hi)), method="highs")
    return res.x if res.status == 0 else None


def martingale_measure(result: SolveResult, tree: ScenarioTree, u: Utility,
                       force: Optional[bool] = None) -> MeasureReport:
    """dQ/dP proportional to marginal utility of optimal terminal wealth.

    Smooth utilities use the left derivative. For piecewise-linear utilities a
    derivative is selected at each leaf from the subdifferential (widened by a
    relative 1e-7 to absorb solver rounding at kinks) so that the first-order
    conditions hold exactly; the report says whether such a selection exists.
    """
    cfg = result.config
    force = cfg.force if force is None else force
    if result.boundary and not force:
        raise BoundaryOptimum("optimal positions touch the position bound; first-order conditions "
                              "need not hold (use force to override)")
    leaves, x, pi = _terminal(result, tree)
    method = "derivative"
    ok = True
    if u.piecewise_linear:
        eps = 1e-7 * np.maximum(1.0, np.abs(x))
        lo = np.asarray(u.right_derivative(x + eps), dtype=float)
        hi = np.asarray(u.left_derivative(x - eps), dtype=float)
        sel = _select_subgradients(tree, leaves, pi, lo, hi, result, cfg.strategy_tol)
        method = "subdifferential"
        if sel is None:
            ok = False
            s = np.asarray(u.left_derivative(x), dtype=float)
        else:
            s = sel
    else:
        s = np.asarray(u.left_derivative(x), dtype=float)
    s = np.atleast_1d(s)
    if np.any(~(s > 0)):
        bad = leaves[int(np.argmin(s))]
        raise ZeroDerivative(f"marginal utility vanishes at leaf {bad} (wealth {result.wealth[bad]!r})")
    norm = float(pi @ s)
    dens = s / norm
    leaf_Q = {leaf: float(p * q) for leaf, p, q in zip(leaves, pi, dens)}
    res = conditional_means(tree, leaf_Q)
    R = _rays(result, tree.d)
    if R is None:
        worst = max((float(np.max(np.abs(r), initial=0.0)) for r in res.values()), default=0.0)
    else:
        worst = max((float(np.max(np.abs(R @ r), initial=0.0)) for r in res.values()), default=0.0)
    passed = ok and (worst <= cfg.fo_tol if R is None else True)
    return MeasureReport({leaf: float(v) for leaf, v in zip(leaves, dens)}, leaf_Q, res,
                         (float(dens.min()), float(dens.max())), norm, worst, method, bool(passed),
                         cfg.fo_tol)


def supermartingale_check(result: SolveResult, tree: ScenarioTree, u: Utility, cone=None,
                          force: Optional[bool] = None) -> dict:
    """Under a cone constraint: <ray, E_Q[dS | node]> <= 0, with equality on used rays."""
    cfg = result.config
    R = np.asarray(cone if cone is not None else
                   (result.cone if result.cone is not None else np.eye(tree.d)), dtype=float)
    rep = martingale_measure(result, tree, u, force)
    nodes = {}
    worst = 0.0
    for n, r in rep.residuals.items():
        proj = R @ r
        used = result.coords[n] > cfg.strategy_tol if result.cone is not None else \
            np.zeros(len(R), bool)
        viol = np.maximum(proj, 0.0)
        viol = np.where(used, np.abs(proj), viol)
        worst = max(worst, float(np.max(viol, initial=0.0)))
        nodes[str(n)] = {"residual": r.tolist(), "ray_residuals": proj.tolist(), "used": used.tolist()}
    return {"nodes": nodes, "max_violation": worst, "passed": bool(worst <= cfg.fo_tol),
            "density_bounds": list(rep.density_bounds)}


def envelope_check(result: SolveResult, tree: ScenarioTree, u: Utility, node: Optional[int] = None,
                   h: float = 1e-4) -> dict:
    """Finite-difference slope of the node's value at realized wealth vs E[U'(V_T) | node]."""
    node = tree.root if node is None else node
    cfg = result.config
    w = result.wealth[node]
    sub = tree.subtree(node)
    leaves = [n for n in sub if tree.is_leaf(n)]
    pp = tree.path_probs
    pi = np.array([pp[leaf] for leaf in leaves]) / pp[node]
    x = np.array([result.wealth[leaf] - result.leaf_shift.get(leaf, 0.0) for leaf in leaves])
    rhs = float(pi @ np.atleast_1d(u.left_derivative(x)))
    if tree.is_leaf(node):
        shift = result.leaf_shift.get(node, 0.0)
        fd = (float(u.eval(w + h - shift)) - float(u.eval(w - h - shift))) / (2 * h)
    else:
        vals = []
        for sign in (1.0, -1.0):
            prob = PathProblem(tree, u, w + sign * h, result.cone, cfg.phimax, result.leaf_shift,
                               root=node, rank_tol=cfg.rank_tol)
            z0 = np.concatenate([result.coords[n] for n in prob.nodes]) if prob.K else None
            vals.append(solve_path(prob, z0).value)
        fd = (vals[0] - vals[1]) / (2 * h)
    out = {"node": node, "wealth": w, "h": h, "finite_difference": fd, "expected_marginal": rhs,
           "gap": abs(fd - rhs)}
    if node in result.value_fns:
        f = result.value_fns[node]
        out["grid_slopes"] = [f.right_derivative(w), f.left_derivative(w)]
    return out


@dataclass
class Claim:
    payoff: Dict[int, float]
    bound: float

    def __post_init__(self):
        self.payoff = {int(k): float(v) for k, v in self.payoff.items()}
        if not all(np.isfinite(v) for v in self.payoff.values()):
            raise MalformedInput("claim payoffs must be finite")
        if not self.bound >= 0:
            raise MalformedInput("claim bound must be nonnegative")
        worst = max((abs(v) for v in self.payoff.values()), default=0.0)
        if worst > self.bound * (1 + 1e-12):
            raise MalformedInput(f"claim payoff {worst!r} exceeds its declared bound {self.bound!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "Claim":
        if not isinstance(data, dict) or "payoff" not in data:
            raise MalformedInput("claim JSON needs a 'payoff' map from leaf id to amount")
        try:
            pay = {int(k): float(v) for k, v in data["payoff"].items()}
        except (TypeError, ValueError, AttributeError) as exc:
            raise MalformedInput(f"bad claim payoff: {exc}") from None
        bound = data.get("bound")
        bound = max((abs(v) for v in pay.values()), default=0.0) if bound is None else float(bound)
        return cls(pay, bound)

    @classmethod
    def constant(cls, tree: ScenarioTree, b: float) -> "Claim":
        return cls({leaf: b for leaf in tree.leaves}, abs(b))

    def check_leaves(self, tree: ScenarioTree) -> None:
        missing = set(tree.leaves) - set(self.payoff)
        extra = set(self.payoff) - set(tree.leaves)
        if missing or extra:
            raise MalformedInput(f"claim must list every leaf exactly: missing {sorted(missing)}, "
                                 f"unknown {sorted(extra)}")


@dataclass
class PriceResult:
    price: float
    iterations: int
    residual: float
    bracket: Tuple[float, float] = (0.0, 0.0)
    base_value: float = 0.0

    def to_dict(self) -> dict:
        return {"price": self.price, "iterations": self.iterations, "residual": self.residual,
                "bracket": list(self.bracket), "base_value": self.base_value}


def price_claim(tree: ScenarioTree, u: Utility, c: float, claim: Claim, config: Optional[Config] = None,
                cone=None, max_iter: int = 200) -> PriceResult:
    """Capital p making the seller of the claim indifferent: u(B, c + p) = u(0, c).

    The map p -> u(B, c + p) is nondecreasing, so the root is bracketed by
    [-bound, bound] and found by bisection down to ``price_tol``.
    """
    cfg = config or default_config()
    claim.check_leaves(tree)
    verdict = validate_tree(tree, cone, cfg.rank_tol, cfg.sphere_tol, certify=False)
    if not verdict.na:
        raise ArbitrageDetected(verdict.arbitrage_node, verdict.witness)
    base = solve_path(PathProblem(tree, u, c, cone, cfg.phimax, rank_tol=cfg.rank_tol)).value
    warm = {}

    def gap(p):
        prob = PathProblem(tree, u, c + p, cone, cfg.phimax, claim.payoff, rank_tol=cfg.rank_tol)
        sol = solve_path(prob, warm.get("z"))
        warm["z"] = sol.z
        return sol.value - base

    lo, hi = -claim.bound, claim.bound
    if claim.bound == 0.0:
        return PriceResult(0.0, 0, gap(0.0), (0.0, 0.0), base)
    g_lo, g_hi = gap(lo), gap(hi)
    slack = 1e-12 * max(1.0, abs(base))
    if g_lo > slack or g_hi < -slack:
        raise BracketFailure(f"no sign change on [{lo}, {hi}]: gaps {g_lo!r}, {g_hi!r}")
    it = 0
    while hi - lo > cfg.price_tol and it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    p = 0.5 * (lo + hi)
    return PriceResult(p, it, gap(p), (lo, hi), base)
