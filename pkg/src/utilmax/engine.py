"""Expected-utility maximization on a scenario tree.

Two computations run side by side:

* the backward pass on a wealth grid, which produces a piecewise-linear value
  function at every node together with the one-step optimizers;
* an exact solve of the whole-tree problem along the realized wealth path,
  which gives the optimal strategy and the root value without grid error.
  Smooth utilities use a projected Newton method, piecewise-linear ones the
  deterministic-equivalent linear program.
"""
from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, minimize

from .concave import PLConcave, from_utility
from .config import Config, default_config
from .errors import (AENotSatisfied, ArbitrageDetected, GridNotConverged, UnboundedObjective,
                     UtilMaxError, ValueDiverged)
from .geometry import Subspace, span_subspace, validate_tree
from .one_step import OneStepProblem, OneStepSolution, solve_one_step
from .tree import ScenarioTree, conditional_dist
from .utility import PiecewiseLinear, Shifted, Utility, check_ae_minus, check_ae_plus

log = logging.getLogger(__name__)

_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


# ---------------------------------------------------------------------------
# whole-tree problem

def pl_lines(u: Utility):
    """Supporting lines (a, b) of a piecewise-linear utility: U(x) = min a x + b."""
    if isinstance(u, Shifted):
        a, b = pl_lines(u.base)
        return a, b + a * u.s - u.base.eval(u.s)
    if not isinstance(u, PiecewiseLinear):
        raise TypeError(f"{u!r} is not piecewise linear")
    s = u.slopes
    bp = u.breakpoints
    if len(bp) == 0:
        return s.copy(), np.zeros(1)
    anchors = np.concatenate([bp, [bp[-1]]])
    return s.copy(), np.asarray(u.eval(anchors)) - s * anchors


class PathProblem:
    """max_z sum_leaves pi U(c + E z - B) over the subtree hanging from ``root``.

    ``z`` stacks one parameter block per interior node: coordinates in the
    support span, or nonnegative ray weights when a cone is given.
    """

    def __init__(self, tree: ScenarioTree, u: Utility, c: float, cone=None, phimax: float = 1e3,
                 leaf_shift: Optional[Mapping[int, float]] = None, root: Optional[int] = None,
                 rank_tol: float = 1e-9, perm_seed: Optional[int] = None):
        self.tree, self.u, self.c, self.phimax = tree, u, float(c), float(phimax)
        root = tree.root if root is None else root
        self.root = root
        sub = tree.subtree(root)
        nodes = [n for n in sub if not tree.is_leaf(n)]
        if perm_seed is not None:
            nodes = list(np.random.default_rng(perm_seed).permutation(nodes))
        self.nodes = tuple(int(n) for n in nodes)
        self.leaves = tuple(n for n in sub if tree.is_leaf(n))
        d = tree.d
        self.cone = None if cone is None else np.asarray(cone, dtype=float).reshape(-1, d)
        self.M: Dict[int, np.ndarray] = {}
        self.D: Dict[int, Subspace] = {}
        self.off: Dict[int, int] = {}
        K = 0
        for n in self.nodes:
            D = span_subspace(conditional_dist(tree, n), rank_tol)
            self.D[n] = D
            self.M[n] = self.cone.T if self.cone is not None else D.basis.T
            self.off[n] = K
            K += self.M[n].shape[1]
        self.K = K
        rows, cols, vals = [], [], []
        for li, leaf in enumerate(self.leaves):
            path = tree.path(leaf)
            path = path[path.index(root):]
            for a, ch in zip(path[:-1], path[1:]):
                w = (tree.prices(ch) - tree.prices(a)) @ self.M[a]
                o = self.off[a]
                for j, v in enumerate(w):
                    if v != 0.0:
                        rows.append(li)
                        cols.append(o + j)
                        vals.append(v)
        self.E = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.leaves), K))
        pp = tree.path_probs
        self.pi = np.array([pp[leaf] for leaf in self.leaves]) / pp[root]
        shift = leaf_shift or {}
        self.B = np.array([float(shift.get(leaf, 0.0)) for leaf in self.leaves])
        self.lower = np.full(K, -np.inf)
        if self.cone is not None:
            self.lower[:] = 0.0

    # evaluation ----------------------------------------------------------
    def arguments(self, z) -> np.ndarray:
        return self.c + self.E @ z - self.B

    def value(self, z) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(self.pi @ self.u.eval(self.arguments(z)))

    def xi(self, z) -> Dict[int, np.ndarray]:
        return {n: self.M[n] @ z[self.off[n]:self.off[n] + self.M[n].shape[1]] for n in self.nodes}

    def coords(self, z) -> Dict[int, np.ndarray]:
        return {n: z[self.off[n]:self.off[n] + self.M[n].shape[1]].copy() for n in self.nodes}

    def wealth(self, z) -> Dict[int, float]:
        xi = self.xi(z)
        out = {self.root: self.c}
        for n in self.tree.subtree(self.root)[1:]:
            p = self.tree.nodes[n].parent
            out[n] = out[p] + float(xi[p] @ (self.tree.prices(n) - self.tree.prices(p)))
        return out

    def box(self):
        """Rows (A, b) of |xi_n|_inf <= phimax for every node."""
        blocks = []
        for n in self.nodes:
            M = self.M[n]
            keep = np.any(M != 0, axis=1)
            blk = np.zeros((2 * int(keep.sum()), self.K))
            o = self.off[n]
            blk[:, o:o + M.shape[1]] = np.vstack([M[keep], -M[keep]])
            blocks.append(blk)
        A = np.vstack(blocks) if blocks else np.zeros((0, self.K))
        return A, np.full(len(A), self.phimax)

    def on_box(self, z, rel: float = 1e-9) -> Dict[int, bool]:
        xi = self.xi(z)
        return {n: bool(len(v) and np.max(np.abs(v)) >= self.phimax * (1 - rel)) for n, v in xi.items()}


@dataclass
class PathSolution:
    z: np.ndarray
    value: float
    method: str
    iterations: int = 0
    gradient_norm: float = 0.0


def _newton(prob: PathProblem, z0=None, max_iter: int = 200) -> PathSolution:
    u, E, pi = prob.u, prob.E, prob.pi
    K = prob.K
    z = np.zeros(K) if z0 is None else np.maximum(np.asarray(z0, dtype=float), prob.lower)
    f = prob.value(z)
    if not np.isfinite(f):
        z = np.maximum(np.zeros(K), prob.lower)
        f = prob.value(z)
    Ed = E.toarray() if K <= 3000 else None
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        x = prob.arguments(z)
        up = pi * u.left_derivative(x)
        g = E.T @ up
        scale = float(np.max(abs(E).T @ np.abs(up), initial=0.0))
        at_bound = (z <= prob.lower) & (g <= 0)
        free = ~at_bound
        gnorm = float(np.max(np.abs(g[free]), initial=0.0))
        if gnorm <= 1e-14 * max(scale, 1e-300):
            break
        h = pi * u.second_derivative(x)
        if Ed is not None:
            H = -(Ed.T * h) @ Ed
        else:
            H = (-(E.T @ sp.diags(h) @ E)).tocsc()
        Hf = H[np.ix_(free, free)] if Ed is not None else H[free][:, free]
        gf = g[free]
        mu = 1e-12 * (1.0 + float(np.max(np.abs(Hf.diagonal()), initial=0.0)))
        step = None
        for _ in range(30):
            try:
                if Ed is not None:
                    dfree = np.linalg.solve(Hf + mu * np.eye(len(gf)), gf)
                else:
                    from scipy.sparse.linalg import spsolve
                    dfree = spsolve((Hf + mu * sp.identity(len(gf))).tocsc(), gf)
                if np.all(np.isfinite(dfree)) and dfree @ gf > 0:
                    step = dfree
                    break
            except np.linalg.LinAlgError:
                pass
            mu *= 100.0
        if step is None:
            step = gf / max(scale, 1e-300)
        d = np.zeros(K)
        d[free] = step
        t = 1.0
        slope = float(g @ d)
        accepted = False
        for _ in range(80):
            zn = np.maximum(z + t * d, prob.lower)
            fn = prob.value(zn)
            if np.isfinite(fn) and fn >= f + 1e-4 * t * slope - 4e-16 * abs(f):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        moved = float(np.max(np.abs(zn - z), initial=0.0))
        z, f = zn, fn
        if moved <= 1e-15 * (1.0 + float(np.max(np.abs(z), initial=0.0))):
            break
        if float(np.max(np.abs(z), initial=0.0)) > 1e6 * prob.phimax:
            break
    return PathSolution(z, f, "newton", it, gnorm)


def _constrained_smooth(prob: PathProblem, z0) -> PathSolution:
    A, b = prob.box()
    bounds = [(lo if np.isfinite(lo) else None, None) for lo in prob.lower]

    def fun(z):
        return -prob.value(z)

    def jac(z):
        return -(prob.E.T @ (prob.pi * prob.u.left_derivative(prob.arguments(z))))

    cons = [{"type": "ineq", "fun": lambda z: b - A @ z, "jac": lambda z: -A}]
    start = np.clip(z0, -prob.phimax, prob.phimax)
    res = minimize(fun, start, jac=jac, bounds=bounds, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-15, "maxiter": 1000})
    z = np.maximum(res.x, prob.lower)
    viol = A @ z - b
    if len(viol) and viol.max() > 0:
        # pull back into the box by scaling each node block
        for n in prob.nodes:
            o, k = prob.off[n], prob.M[n].shape[1]
            m = np.max(np.abs(prob.M[n] @ z[o:o + k]), initial=0.0)
            if m > prob.phimax:
                z[o:o + k] *= prob.phimax / m
    return PathSolution(z, prob.value(z), "slsqp", int(res.nit), 0.0)


def _lp_path(prob: PathProblem, tiebreak: bool = True) -> PathSolution:
    a, b = pl_lines(prob.u)
    L, K, J = len(prob.leaves), prob.K, len(a)
    # rows j*L + l: v_l - a_j (E_l z) <= a_j (c - B_l) + b_j
    E = prob.E.tocoo()
    nnz = len(E.data)
    jj = np.repeat(np.arange(J), nnz)
    r_z = jj * L + np.tile(E.row, J)
    c_z = np.tile(E.col, J)
    v_z = -a[jj] * np.tile(E.data, J)
    r_v = np.arange(J * L)
    c_v = K + np.tile(np.arange(L), J)
    lines = sp.csr_matrix((np.concatenate([v_z, np.ones(J * L)]),
                           (np.concatenate([r_z, r_v]), np.concatenate([c_z, c_v]))),
                          shape=(J * L, K + L))
    rhs = (a[:, None] * (prob.c - prob.B)[None, :] + b[:, None]).reshape(-1)
    A_box, b_box = prob.box()
    A_ub = sp.vstack([lines, sp.hstack([sp.csr_matrix(A_box), sp.csr_matrix((len(A_box), L))])]).tocsr()
    b_ub = np.concatenate([rhs, b_box])
    bounds = [(lo if np.isfinite(lo) else None, None) for lo in prob.lower] + [(None, None)] * L
    cost = np.concatenate([np.zeros(K), -prob.pi])
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs", options=_HIGHS)
    if res.status == 3:
        raise UnboundedObjective("whole-tree LP is unbounded")
    if res.status != 0:
        raise UtilMaxError(f"whole-tree LP failed: {res.message}")
    z = res.x[:K]
    best = PathSolution(z, prob.value(z), "lp")
    if not tiebreak or K == 0:
        return best
    # minimum sum |xi| over the (numerically) optimal face
    opt = -res.fun
    tol = 1e-11 * max(1.0, abs(opt))
    Ms = [(n, prob.M[n]) for n in prob.nodes]
    d = prob.tree.d
    nt = d * len(Ms)
    Tm = []
    for i, (n, M) in enumerate(Ms):
        o, k = prob.off[n], M.shape[1]
        for sgn in (1.0, -1.0):
            blk = np.zeros((d, K + L + nt))
            blk[:, o:o + k] = sgn * M
            blk[:, K + L + i * d:K + L + (i + 1) * d] = -np.eye(d)
            Tm.append(blk)
    obj_row = np.concatenate([np.zeros(K), -prob.pi, np.zeros(nt)])[None, :]
    A2 = sp.vstack([sp.hstack([A_ub, sp.csr_matrix((A_ub.shape[0], nt))]),
                    sp.csr_matrix(obj_row), sp.csr_matrix(np.vstack(Tm))]).tocsr()
    b2 = np.concatenate([b_ub, [-(opt - tol)], np.zeros(2 * nt)])
    cost2 = np.concatenate([np.zeros(K + L), np.ones(nt)])
    res2 = linprog(cost2, A_ub=A2, b_ub=b2, bounds=bounds + [(0, None)] * nt, method="highs",
                   options=_HIGHS)
    if res2.status == 0:
        z2 = res2.x[:K]
        v2 = prob.value(z2)
        if v2 >= best.value - 1e-12 * max(1.0, abs(best.value)):
            return PathSolution(z2, v2, "lp")
    return best


def solve_path(prob: PathProblem, z0=None) -> PathSolution:
    """Exact optimum of the whole-tree problem within the position box."""
    if prob.K == 0:
        return PathSolution(np.zeros(0), prob.value(np.zeros(0)), "trivial")
    if prob.u.piecewise_linear:
        return _lp_path(prob)
    if not prob.u.smooth:
        raise UtilMaxError(f"no solver for utility {prob.u!r}")
    sol = _newton(prob, z0)
    A, b = prob.box()
    if not np.isfinite(sol.value) or (len(A) and np.max(A @ sol.z - b) > 1e-12 * prob.phimax):
        sol = _constrained_smooth(prob, sol.z if np.all(np.isfinite(sol.z)) else np.zeros(prob.K))
    return sol


# ---------------------------------------------------------------------------
# grid backward pass

def _flat_top(f: PLConcave) -> PLConcave:
    # Past the last grid point only f >= f(x_end) is known. A chord-slope
    # extension overshoots the concave truth there, and large positions would
    # harvest the overshoot; the flat one is a lower bound.
    return PLConcave(f.x, f.v, f.left_slope, 0.0, check=False)


def leaf_function(u: Utility, grid: np.ndarray, shift: float = 0.0) -> PLConcave:
    """x -> U(x - shift) interpolated on ``grid``, flat beyond its top."""
    if shift == 0.0:
        return _flat_top(from_utility(u, grid))
    return _flat_top(from_utility(u, grid - shift).shifted(-shift))


def backward(tree: ScenarioTree, u: Utility, grid: np.ndarray, phimax: float, cone=None,
             leaf_shift: Optional[Mapping[int, float]] = None, rank_tol: float = 1e-9,
             threads: int = 1, method: str = "auto"):
    """Value function and one-step solution at every node, time slices T-1 down to 0."""
    shift = leaf_shift or {}
    fns: Dict[int, PLConcave] = {leaf: leaf_function(u, grid, float(shift.get(leaf, 0.0)))
                                 for leaf in tree.leaves}
    sols: Dict[int, OneStepSolution] = {}
    dims: Dict[int, Subspace] = {}

    def one(n):
        D = span_subspace(conditional_dist(tree, n), rank_tol)
        prob = OneStepProblem(tree.increments(n), tree.branch_probs(n),
                              [fns[ch] for ch in tree.children(n)], D, grid, phimax, cone)
        return n, D, solve_one_step(prob, method)

    for t in range(tree.T - 1, -1, -1):
        nodes = [n for n in tree.slice(t) if not tree.is_leaf(n)]
        if threads > 1 and len(nodes) > 1:
            with ThreadPoolExecutor(threads) as ex:
                out = list(ex.map(one, nodes))
        else:
            out = [one(n) for n in nodes]
        for n, D, s in out:
            s.G = _flat_top(s.G)
            fns[n], sols[n], dims[n] = s.G, s, D
    return fns, sols, dims


def grid_forward(tree: ScenarioTree, sols: Mapping[int, OneStepSolution], c: float):
    """Strategy obtained by feeding realized wealth into the grid optimizers."""
    wealth = {tree.root: float(c)}
    xi = {}
    for n in tree.order:
        if tree.is_leaf(n):
            continue
        xi[n] = sols[n].xi_at(wealth[n])
        for ch in tree.children(n):
            wealth[ch] = wealth[n] + float(xi[n] @ (tree.prices(ch) - tree.prices(n)))
    return xi, wealth


# ---------------------------------------------------------------------------
# result

@dataclass
class SolveResult:
    capital: float
    root_value: float
    value_fns: Dict[int, PLConcave]
    strategy: Dict[int, np.ndarray]  # position held at each interior node, in R^d
    coords: Dict[int, np.ndarray]  # same, in support-span coordinates or cone weights
    wealth: Dict[int, float]
    attained_interior: Dict[int, bool]
    subspaces: Dict[int, Subspace]
    one_step: Dict[int, OneStepSolution] = field(default_factory=dict)
    grid: Optional[np.ndarray] = None
    config: Config = field(default_factory=Config)
    cone: Optional[np.ndarray] = None
    leaf_shift: Dict[int, float] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def boundary(self) -> bool:
        return not all(self.attained_interior.values())

    def to_dict(self) -> dict:
        nodes = sorted(self.strategy)
        return {
            "capital": self.capital,
            "root_value": self.root_value,
            "boundary": self.boundary,
            "strategy": [{"node": n, "xi": self.strategy[n].tolist(), "coords": self.coords[n].tolist(),
                          "attained_interior": self.attained_interior[n]} for n in nodes],
            "wealth": {str(n): self.wealth[n] for n in sorted(self.wealth)},
            "diagnostics": _jsonable(self.diagnostics),
            "config": self.config.to_dict(),
        }

    def strategy_csv(self) -> str:
        buf = io.StringIO()
        d = len(next(iter(self.strategy.values()))) if self.strategy else 0
        buf.write("node,wealth," + ",".join(f"xi{j}" for j in range(d)) + ",attained_interior\n")
        for n in sorted(self.strategy):
            xs = ",".join(repr(float(v)) for v in self.strategy[n])
            buf.write(f"{n},{float(self.wealth[n])!r},{xs},{str(self.attained_interior[n]).lower()}\n")
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def ae_status(u: Utility, policy: str = "warn") -> dict:
    """Run the declared elasticity checks; raise under the strict policy if one fails."""
    out = {}
    if policy == "off":
        return out
    if u.gamma is not None and u.xtilde is not None and u.xtilde > 0:
        out["ae_plus"] = check_ae_plus(u, u.gamma, u.xtilde).to_dict()
    if u.alpha is not None and u.xtilde is not None and u.xtilde <= 0:
        out["ae_minus"] = check_ae_minus(u, u.alpha, u.xtilde).to_dict()
    failed = [k for k, r in out.items() if not r["passed"]]
    if not out:
        out["note"] = "no elasticity parameters declared"
    if failed:
        msg = f"utility fails {', '.join(failed)}"
        if policy == "strict":
            raise AENotSatisfied(msg)
        log.warning(msg)
    if policy == "strict" and "note" in out:
        raise AENotSatisfied("strict elasticity policy but no parameters declared")
    return out


def _halfwidth(wealth: Mapping[int, float], c: float) -> float:
    return max(1.0, 2.0 * max(abs(w - c) for w in wealth.values()))


def solve(tree: ScenarioTree, u: Utility, c: float, config: Optional[Config] = None, cone=None,
          leaf_shift: Optional[Mapping[int, float]] = None, grid: bool = True,
          check_na: bool = True) -> SolveResult:
    """Optimal strategy, wealth path, root value and per-node value functions."""
    cfg = config or default_config()
    c = float(c)
    diag: dict = {"ae": ae_status(u, cfg.require_ae)}
    if check_na:
        verdict = validate_tree(tree, cone, cfg.rank_tol, cfg.sphere_tol, certify=False)
        if not verdict.na:
            raise ArbitrageDetected(verdict.arbitrage_node, verdict.witness)
    shift = {int(k): float(v) for k, v in (leaf_shift or {}).items()}

    prob = PathProblem(tree, u, c, cone, cfg.phimax, shift, rank_tol=cfg.rank_tol)
    sol = solve_path(prob)
    flags = prob.on_box(sol.z)
    diag["path_method"] = sol.method
    if any(flags.values()):
        values = [sol.value]
        for m in (2, 4):
            p2 = PathProblem(tree, u, c, cone, cfg.phimax * m, shift, rank_tol=cfg.rank_tol)
            values.append(solve_path(p2).value)
        diag["phimax_doubling"] = values
        d1, d2 = values[1] - values[0], values[2] - values[1]
        # growth that does not slow down under doubling means an unbounded supremum
        if d1 > cfg.divergence_tol and d2 > cfg.divergence_tol and d2 >= 0.9 * d1:
            raise ValueDiverged(f"root value keeps growing with the position bound: {values}")

    wealth = prob.wealth(sol.z)
    result = SolveResult(
        capital=c, root_value=sol.value, value_fns={}, strategy=prob.xi(sol.z),
        coords=prob.coords(sol.z), wealth=wealth, attained_interior={n: not b for n, b in flags.items()},
        subspaces=dict(prob.D), config=cfg, cone=prob.cone, leaf_shift=shift, diagnostics=diag)
    if grid:
        _attach_grid(result, tree, u)
    return result


def _attach_grid(result: SolveResult, tree: ScenarioTree, u: Utility) -> None:
    cfg = result.config
    c = result.capital
    H = cfg.wealth_halfwidth or _halfwidth(result.wealth, c)
    n = cfg.n_grid
    history = []
    prev = None
    for _ in range(cfg.refine_rounds + 1):
        g = c + H * np.linspace(-1.0, 1.0, n)
        fns, sols, _ = backward(tree, u, g, cfg.phimax, result.cone, result.leaf_shift,
                                cfg.rank_tol, cfg.threads)
        gv = float(fns[tree.root](c))
        history.append({"n_grid": n, "grid_root_value": gv})
        if prev is not None and abs(gv - prev) <= cfg.value_tol:
            break
        prev = gv
        n = 2 * n - 1
    else:
        if cfg.refine_rounds > 0 and cfg.strict_grid:
            raise GridNotConverged(f"grid root value not settled after {cfg.refine_rounds} refinements")
    result.grid, result.value_fns, result.one_step = g, fns, sols
    xi_grid, _ = grid_forward(tree, sols, c)
    gap = max((float(np.max(np.abs(xi_grid[k] - result.strategy[k]), initial=0.0)) for k in xi_grid),
              default=0.0)
    result.diagnostics.update({
        "grid_halfwidth": H,
        "grid_root_value": history[-1]["grid_root_value"],
        "grid_root_gap": abs(history[-1]["grid_root_value"] - result.root_value),
        "grid_strategy_gap": gap,
        "refinement": history,
        "grid_boundary_points": int(sum(int(np.sum(~s.attained_interior)) for s in sols.values())),
    })


# ---------------------------------------------------------------------------
# evaluation and verification

class _Payoffs:
    """Leaf wealth as a linear map of the stacked raw positions (one R^d block per node)."""

    def __init__(self, tree: ScenarioTree, root: Optional[int] = None):
        root = tree.root if root is None else root
        sub = tree.subtree(root)
        self.nodes = [n for n in sub if not tree.is_leaf(n)]
        self.leaves = [n for n in sub if tree.is_leaf(n)]
        idx = {n: i for i, n in enumerate(self.nodes)}
        d = tree.d
        P = np.zeros((len(self.leaves), len(self.nodes) * d))
        for li, leaf in enumerate(self.leaves):
            path = tree.path(leaf)
            path = path[path.index(root):]
            for a, ch in zip(path[:-1], path[1:]):
                P[li, idx[a] * d:(idx[a] + 1) * d] += tree.prices(ch) - tree.prices(a)
        self.P = P
        pp = tree.path_probs
        self.pi = np.array([pp[leaf] for leaf in self.leaves]) / pp[root]
        self.d = d

    def stack(self, strategy: Mapping[int, np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(strategy[n], dtype=float).reshape(self.d) for n in self.nodes]) \
            if self.nodes else np.zeros(0)

    def values(self, u: Utility, c: float, X: np.ndarray, shift: np.ndarray) -> np.ndarray:
        """Expected utility for each row of X (stacked strategies)."""
        with np.errstate(over="ignore", invalid="ignore"):
            W = c + X @ self.P.T - shift[None, :]
            return np.asarray(u.eval(W)) @ self.pi


def expected_utility(tree: ScenarioTree, u: Utility, c: float, strategy: Mapping[int, Sequence[float]],
                     leaf_shift: Optional[Mapping[int, float]] = None) -> float:
    """E U(terminal wealth - shift) for positions given at every interior node."""
    pay = _Payoffs(tree)
    shift = np.array([float((leaf_shift or {}).get(leaf, 0.0)) for leaf in pay.leaves])
    return float(pay.values(u, c, pay.stack(strategy)[None, :], shift)[0])


def _lattice_rows(axes: List[np.ndarray], chunk: int = 200_000):
    sizes = [len(a) for a in axes]
    total = int(np.prod(sizes))
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        cols = np.unravel_index(idx, sizes)
        yield np.column_stack([a[i] for a, i in zip(axes, cols)])


def verify_optimality(result: SolveResult, tree: ScenarioTree, u: Utility, trials: int = 10_000,
                      box: float = 5.0, lattice_step: Optional[float] = 0.05, lattice_box: float = 3.0,
                      tol: float = 1e-9, seed: Optional[int] = None, exhaustive_dim: int = 3) -> dict:
    """Compare the root value against random and lattice strategies.

    Random positions are uniform in [-box, box]^d per node (cone weights in
    [0, box] when the solve was constrained). The lattice is exhaustive when
    the stacked strategy has at most ``exhaustive_dim`` coordinates; otherwise
    each node is swept over its own lattice with the other nodes held at the
    optimum.
    """
    pay = _Payoffs(tree)
    c = result.capital
    shift = np.array([result.leaf_shift.get(leaf, 0.0) for leaf in pay.leaves])
    rng = np.random.default_rng(result.config.seed if seed is None else seed)
    d = tree.d
    nn = len(pay.nodes)
    R = result.cone
    if nn == 0:
        best_rand = float(pay.values(u, c, np.zeros((1, 0)), shift)[0])
        return {"root_value": result.root_value, "max_random": best_rand, "max_lattice": best_rand,
                "lattice_mode": "none", "passed": best_rand <= result.root_value + tol}
    if R is None:
        X = rng.uniform(-box, box, size=(trials, nn * d))
    else:
        lam = rng.uniform(0.0, box, size=(trials, nn, R.shape[0]))
        X = (lam @ R).reshape(trials, nn * d)
    best_rand = -np.inf
    for s in range(0, trials, 50_000):
        best_rand = max(best_rand, float(np.nanmax(pay.values(u, c, X[s:s + 50_000], shift))))
    out = {"root_value": result.root_value, "max_random": best_rand, "trials": trials}
    best_lat = -np.inf
    if lattice_step is not None and R is None:
        axis = np.arange(-lattice_box, lattice_box + lattice_step / 2, lattice_step)
        if nn * d <= exhaustive_dim:
            out["lattice_mode"] = "exhaustive"
            for rows in _lattice_rows([axis] * (nn * d)):
                best_lat = max(best_lat, float(np.nanmax(pay.values(u, c, rows, shift))))
        else:
            out["lattice_mode"] = "per-node"
            base = pay.stack(result.strategy)
            for i in range(nn):
                for rows in _lattice_rows([axis] * d):
                    Xl = np.repeat(base[None, :], len(rows), axis=0)
                    Xl[:, i * d:(i + 1) * d] = rows
                    best_lat = max(best_lat, float(np.nanmax(pay.values(u, c, Xl, shift))))
        out["max_lattice"] = best_lat
    out["passed"] = bool(best_rand <= result.root_value + tol and best_lat <= result.root_value + tol)
    return out


def verify_uniqueness(result: SolveResult, tree: ScenarioTree, u: Utility, restarts: int = 5,
                      seed: Optional[int] = None) -> dict:
    """Re-solve from random starts with permuted variable order; compare strategies."""
    cfg = result.config
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    devs, gaps = [], []
    for r in range(restarts):
        prob = PathProblem(tree, u, result.capital, result.cone, cfg.phimax, result.leaf_shift,
                           rank_tol=cfg.rank_tol, perm_seed=int(rng.integers(2**31)))
        z0 = rng.normal(size=prob.K)
        if result.cone is not None:
            z0 = np.abs(z0)
        sol = solve_path(prob, z0)
        xi = prob.xi(sol.z)
        dev = max((float(np.max(np.abs(result.subspaces[n].project(xi[n]) -
                                      result.subspaces[n].project(result.strategy[n])), initial=0.0))
                   for n in xi), default=0.0)
        devs.append(dev)
        gaps.append(abs(sol.value - result.root_value))
    ortho = max((float(np.max(np.abs(v - result.subspaces[n].project(v)), initial=0.0))
                 for n, v in result.strategy.items() if result.cone is None), default=0.0)
    out = {"restarts": restarts, "max_strategy_deviation": max(devs, default=0.0),
           "max_value_gap": max(gaps, default=0.0), "orthogonal_component": ortho,
           "strictly_concave": bool(u.strictly_concave)}
    out["agree"] = bool(out["max_strategy_deviation"] <= cfg.strategy_tol)
    return out
