"""One-period problem: G(x) = max_xi sum_i p_i V_i(x + <xi, y_i>).

Each outcome i carries its own piecewise-linear concave V_i (the next-period
value function at child i). The problem is solved for every point of a wealth
grid. Strategies are parametrized as xi = M z: M is an orthonormal basis of
the support span (unconstrained case) or the matrix of cone rays (z >= 0).
In both cases the box |xi|_inf <= phimax is enforced.

Two solvers are provided:

* ``"lp"``: one linear program per grid point over the supporting lines of the
  V_i, followed by a second LP picking the minimum-l1-norm optimizer.
* ``"search"`` (dimension <= 2): bisection on the one-sided derivatives of the
  concave objective, nested inside a golden-section search for dimension 2.
  Vectorized over the whole grid, hence much faster; it reaches the same
  optimal value up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .concave import PLConcave
from .errors import InfeasibleCone, UnboundedObjective
from .geometry import Subspace

GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OneStepProblem:
    increments: np.ndarray  # (n, d), one row per child
    probs: np.ndarray  # (n,)
    V: Sequence[PLConcave]  # one per child
    D: Subspace
    grid: np.ndarray
    phimax: float = 1e3
    cone: Optional[np.ndarray] = None  # generating rays as rows

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=float).reshape(len(self.probs), -1)
        self.probs = np.asarray(self.probs, dtype=float)
        self.grid = np.asarray(self.grid, dtype=float)
        if len(self.V) != len(self.probs):
            raise ValueError("need one value function per outcome")
        if self.cone is not None:
            R = np.asarray(self.cone, dtype=float).reshape(-1, self.increments.shape[1])
            if R.shape[0] == 0:
                raise InfeasibleCone("cone has no generating rays")
            if np.any(np.max(np.abs(R), axis=1) == 0):
                raise InfeasibleCone("cone rays must be nonzero")
            self.cone = R

    # parametrization -----------------------------------------------------
    @property
    def M(self) -> np.ndarray:
        if self.cone is not None:
            return self.cone.T
        return self.D.basis.T

    @property
    def k(self) -> int:
        return self.M.shape[1]

    def constraints(self):
        """Rows (A, b) of A z <= b, and the mask of rows that are box rows."""
        M = self.M
        if self.cone is not None:
            k = M.shape[1]
            A = np.vstack([-np.eye(k), M, -M])
            b = np.concatenate([np.zeros(k), np.full(2 * M.shape[0], self.phimax)])
            box = np.concatenate([np.zeros(k, bool), np.ones(2 * M.shape[0], bool)])
        else:
            A = np.vstack([M, -M])
            b = np.full(2 * M.shape[0], self.phimax)
            box = np.ones(len(b), bool)
        keep = np.any(A != 0, axis=1)
        return A[keep], b[keep], box[keep]

    def objective(self, x: float, z) -> np.ndarray:
        """sum_i p_i V_i(x + <M z, y_i>) for each row of ``z``."""
        W = self.increments @ self.M
        pay = np.atleast_2d(np.asarray(z, dtype=float)) @ W.T
        return sum(p * f.eval(x + pay[:, i]) for i, (p, f) in enumerate(zip(self.probs, self.V)))


@dataclass
class OneStepSolution:
    grid: np.ndarray
    G: PLConcave
    z: np.ndarray  # (m, k) parameters
    xi: np.ndarray  # (m, d) strategies
    attained_interior: np.ndarray  # (m,) bool
    method: str = ""

    def xi_at(self, x: float) -> np.ndarray:
        """Strategy interpolated linearly between grid points (clamped at the ends)."""
        return np.array([np.interp(x, self.grid, self.xi[:, j]) for j in range(self.xi.shape[1])])


# ---------------------------------------------------------------------------
# vectorized search

def _slopes(V, t, w, side):
    # one-sided derivative of V(t(z)) with dt/dz = w, per element
    if side > 0:
        return w * np.where(w > 0, V.right_derivative(t), V.left_derivative(t))
    return w * np.where(w > 0, V.left_derivative(t), V.right_derivative(t))


class _Search:
    def __init__(self, prob: OneStepProblem):
        self.p = prob.probs
        self.V = list(prob.V)
        self.W = prob.increments @ prob.M  # (n, k)

    def value(self, base):
        # base: (m, n) arguments x + <Mz, y_i>
        return sum(p * f.eval(base[:, i]) for i, (p, f) in enumerate(zip(self.p, self.V)))

    def deriv(self, base, col, side):
        out = 0.0
        for i, (p, f) in enumerate(zip(self.p, self.V)):
            w = self.W[i, col]
            if w != 0.0:
                out = out + p * _slopes(f, base[:, i], w, side)
        return out

    def argmax_1d(self, base, col, lo, hi, iters=200):
        """Minimum-|z| maximizer of z -> f(base + z W[:, col]) on [lo, hi]."""
        w = self.W[:, col]

        def at(z):
            return base + z[:, None] * w[None, :]

        def crossing(side, positive_side):
            # largest z in [lo, hi] with one-sided derivative still on the ascending side
            a, b = lo.copy(), hi.copy()
            da = self.deriv(at(a), col, side)
            db = self.deriv(at(b), col, side)
            up_a = da > 0 if positive_side else da >= 0
            up_b = db > 0 if positive_side else db >= 0
            res = np.where(up_b, b, a)
            todo = up_a & ~up_b
            for _ in range(iters):
                if not np.any(todo):
                    break
                mid = 0.5 * (a + b)
                dm = self.deriv(at(mid), col, side)
                up = dm > 0 if positive_side else dm >= 0
                a = np.where(todo & up, mid, a)
                b = np.where(todo & ~up, mid, b)
                todo = todo & (b - a > 4e-16 * np.maximum(1.0, np.abs(a)))
            return np.where(up_a & ~up_b, a, res)

        z_lo = crossing(+1, True)   # start of the optimal face
        z_hi = crossing(-1, False)  # end of the optimal face
        z_hi = np.maximum(z_hi, z_lo)
        return np.clip(0.0, z_lo, z_hi)


def _interval(A, b, fixed, col, other_cols, m):
    """Bounds on z[col] given the other coordinates ``fixed`` (m, len(other_cols))."""
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    for a, bb in zip(A, b):
        rest = bb - (fixed @ a[other_cols] if len(other_cols) else 0.0)
        if a[col] > 0:
            hi = np.minimum(hi, rest / a[col])
        elif a[col] < 0:
            lo = np.maximum(lo, rest / a[col])
    return lo, np.maximum(lo, hi)


def _solve_search(prob: OneStepProblem):
    A, b, _ = prob.constraints()
    m = len(prob.grid)
    S = _Search(prob)
    X = np.repeat(prob.grid[:, None], len(prob.probs), axis=1)
    k = prob.k
    if k == 1:
        lo, hi = _interval(A, b, np.zeros((m, 0)), 0, [], m)
        z = S.argmax_1d(X, 0, lo, hi)
        return z[:, None]
    # k == 2: golden section on z0 over the projection of the feasible polygon
    r_lo = linprog([1, 0], A_ub=A, b_ub=b, bounds=[(None, None)] * 2, method="highs")
    r_hi = linprog([-1, 0], A_ub=A, b_ub=b, bounds=[(None, None)] * 2, method="highs")
    a = np.full(m, r_lo.x[0])
    c = np.full(m, r_hi.x[0])

    def inner(z0):
        lo, hi = _interval(A, b, z0[:, None], 1, [0], m)
        base = X + z0[:, None] * S.W[:, 0][None, :]
        z1 = S.argmax_1d(base, 1, lo, hi)
        return z1, S.value(base + z1[:, None] * S.W[:, 1][None, :])

    x1 = c - GOLD * (c - a)
    x2 = a + GOLD * (c - a)
    f1 = inner(x1)[1]
    f2 = inner(x2)[1]
    for _ in range(300):
        if np.all(c - a <= 1e-13 * np.maximum(1.0, np.abs(a))):
            break
        left = f1 >= f2  # keep [a, x2]
        c = np.where(left, x2, c)
        a = np.where(left, a, x1)
        nx1 = c - GOLD * (c - a)
        nx2 = a + GOLD * (c - a)
        x1, x2 = nx1, nx2
        f1 = inner(x1)[1]
        f2 = inner(x2)[1]
    cands = [a, c, 0.5 * (a + c)]
    vals = [inner(v)[1] for v in cands]
    pick = np.argmax(np.vstack(vals), axis=0)
    z0 = np.choose(pick, cands)
    z1, _ = inner(z0)
    return np.column_stack([z0, z1])


def _solve_edges(prob: OneStepProblem):
    """k == 2, optimum known to sit on the boundary of the feasible polygon.

    Each edge is searched exactly in one dimension; the best edge wins.
    """
    A, b, _ = prob.constraints()
    m = len(prob.grid)
    S = _Search(prob)
    W = S.W
    X = np.repeat(prob.grid[:, None], len(prob.probs), axis=1)
    best_val = np.full(m, -np.inf)
    best_z = np.zeros((m, 2))
    best_j = np.full(m, -1)
    for j, (aj, bj) in enumerate(zip(A, b)):
        nrm = float(aj @ aj)
        z0 = aj * bj / nrm
        e = np.array([-aj[1], aj[0]]) / np.sqrt(nrm)
        lo, hi = -np.inf, np.inf
        feasible = True
        for i, (ai, bi) in enumerate(zip(A, b)):
            if i == j:
                continue
            r = bi - ai @ z0
            q = ai @ e
            if abs(q) <= 1e-14 * np.linalg.norm(ai):
                if r < -1e-12 * max(1.0, abs(bi)):
                    feasible = False
                continue
            if q > 0:
                hi = min(hi, r / q)
            else:
                lo = max(lo, r / q)
        if not feasible or lo > hi or not (np.isfinite(lo) and np.isfinite(hi)):
            continue
        S.W = (W @ e)[:, None]
        base = X + (W @ z0)[None, :]
        s = S.argmax_1d(base, 0, np.full(m, lo), np.full(m, hi))
        val = S.value(base + s[:, None] * S.W[:, 0][None, :])
        take = val > best_val
        best_val = np.where(take, val, best_val)
        best_z[take] = z0[None, :] + s[take, None] * e[None, :]
        best_j[take] = j
    # the boundary point is optimal only if stepping inward does not help
    ok = best_j >= 0
    for j in np.unique(best_j[ok]):
        sel = best_j == j
        inward = -A[j] / np.linalg.norm(A[j])
        S.W = (W @ inward)[:, None]
        base = X[sel] + best_z[sel] @ W.T
        slope = S.deriv(base, 0, +1)
        scale = float(np.sum(prob.probs * np.abs(S.W[:, 0]))) * max(float(np.max(np.abs(f.slopes))) for f in S.V)
        ok[sel] = slope <= 1e-10 * max(scale, 1e-300)
    S.W = W
    return best_z, ok


# ---------------------------------------------------------------------------
# one linear relation among payoffs: bisection on its multiplier

def _argmax_set(f: PLConcave, r):
    """Interval [lo, hi] of maximizers of f(t) - r t (entries may be +-inf)."""
    s = f.slopes
    neg = np.maximum.accumulate(-s)  # nondecreasing even with rounding noise
    # slopes within a relative 1e-12 of r count as equal to it
    eps = 1e-12 * np.maximum(1.0, np.abs(r))
    A = np.searchsorted(neg, -r - eps, side="left")  # number of slopes > r
    B = np.searchsorted(neg, -r + eps, side="right")  # number of slopes >= r
    xb = f.x
    m = len(xb)
    lo = np.where(A >= 1, xb[np.clip(A - 1, 0, m - 1)], -np.inf)
    lo = np.where(A > m, np.inf, lo)
    hi = np.where(B <= m, xb[np.clip(B - 1, 0, m - 1)], np.inf)
    hi = np.where(B == 0, -np.inf, hi)
    return lo, hi


def _solve_dual(prob: OneStepProblem):
    """n = k + 1 outcomes: payoffs t = x + W z satisfy the single relation c.t = x sum(c).

    Maximizing sum p_i V_i(t_i) under it is separable; the multiplier lam is
    found by bisection, each t_i(lam) read off the slopes of V_i. Returns z and
    a mask of grid points where the answer is valid (box not binding,
    multiplier domain nonempty).
    """
    W = prob.increments @ prob.M
    n, k = W.shape
    m = len(prob.grid)
    _, _, vt = np.linalg.svd(W.T)
    c = vt[-1]
    if np.all(c <= 0):
        c = -c
    ok = np.ones(m, bool)
    if not np.all(c > 1e-12 * np.max(np.abs(c))):
        return np.zeros((m, k)), ~ok
    p = prob.probs
    lam_lo = max(p[i] * prob.V[i].slopes[-1] / c[i] for i in range(n))
    lam_hi = min(p[i] * prob.V[i].slopes[0] / c[i] for i in range(n))
    if not lam_lo <= lam_hi:
        return np.zeros((m, k)), ~ok
    tau = prob.grid * c.sum()
    # payoffs reachable under the box; clipping the argmax sets there keeps them finite
    reach = float(np.max(np.abs(prob.grid))) + 2.0 * math.sqrt(prob.increments.shape[1]) * \
        prob.phimax * float(np.max(np.linalg.norm(W, axis=1))) + 1.0

    def sets(lam):
        lo = np.zeros(m)
        hi = np.zeros(m)
        t_lo, t_hi = [], []
        for i in range(n):
            a, b = _argmax_set(prob.V[i], lam * c[i] / p[i])
            a = np.clip(a, -reach, reach)
            b = np.clip(b, -reach, reach)
            t_lo.append(a)
            t_hi.append(b)
            lo = lo + c[i] * a
            hi = hi + c[i] * b
        return lo, hi, t_lo, t_hi

    a = np.full(m, lam_lo)
    b = np.full(m, lam_hi)
    # the domain ends are where an end piece of some V_i becomes optimal
    for end in (lam_lo, lam_hi):
        lo, hi, _, _ = sets(np.full(m, end))
        hit = (lo <= tau) & (hi >= tau)
        a = np.where(hit, end, a)
        b = np.where(hit, end, b)
    for _ in range(200):
        mid = 0.5 * (a + b)
        lo, hi, _, _ = sets(mid)
        up = lo > tau  # sum too large: raise the multiplier
        down = hi < tau
        a = np.where(up, mid, a)
        b = np.where(down, mid, b)
        hit = ~up & ~down
        a = np.where(hit, mid, a)
        b = np.where(hit, mid, b)
        if np.all(b - a <= 1e-15 * np.maximum(1.0, np.abs(a))):
            break
    # per-outcome ranges of optimal payoffs; pick the point of the face closest
    # to the no-trade payoffs x by clipping x + nu c and solving for nu
    # (a and b are within rounding of the multiplier, so the union is optimal)
    _, _, la, ha = sets(a)
    _, _, lb, hb = sets(b)
    Lo = np.minimum(np.column_stack(la), np.column_stack(lb))
    Hi = np.maximum(np.column_stack(ha), np.column_stack(hb))
    x = prob.grid[:, None]
    nu_lo = np.min((Lo - x) / c[None, :], axis=1)
    nu_hi = np.max((Hi - x) / c[None, :], axis=1)
    ok &= (Lo @ c <= tau + 1e-12 * np.maximum(1.0, np.abs(tau))) & \
        (Hi @ c >= tau - 1e-12 * np.maximum(1.0, np.abs(tau)))
    for _ in range(200):
        nu = 0.5 * (nu_lo + nu_hi)
        low = np.clip(x + nu[:, None] * c[None, :], Lo, Hi) @ c < tau
        nu_lo = np.where(low, nu, nu_lo)
        nu_hi = np.where(low, nu_hi, nu)
        if np.all(nu_hi - nu_lo <= 1e-16 * np.maximum(1.0, np.abs(nu_lo))):
            break
    T = np.clip(x + nu_hi[:, None] * c[None, :], Lo, Hi)
    # absorb the rounding left in the relation into the outcomes not at a range end
    gap = (tau - T @ c)
    inner = (T > Lo) & (T < Hi)
    cnt = (inner * c[None, :] ** 2).sum(axis=1)
    T = T + np.where(cnt[:, None] > 0, inner * c[None, :] * (gap / np.where(cnt > 0, cnt, 1.0))[:, None], 0.0)
    z, *_ = np.linalg.lstsq(W, (T - prob.grid[:, None]).T, rcond=None)
    z = z.T
    A_, b_, _ = prob.constraints()
    ok &= np.all(z @ A_.T <= b_ * (1 + 1e-12), axis=1)
    ok &= np.abs(z @ W.T + prob.grid[:, None] - T).max(axis=1) <= 1e-9 * np.maximum(1.0, np.abs(T).max(axis=1))
    return z, ok


# ---------------------------------------------------------------------------
# linear programming

def _solve_lp(prob: OneStepProblem, tiebreak: bool = True):
    A, b, _ = prob.constraints()
    M = prob.M
    k = prob.k
    n = len(prob.probs)
    W = prob.increments @ M
    lines = [f.lines_array() for f in prob.V]
    zs = np.zeros((len(prob.grid), k))
    for g, x in enumerate(prob.grid):
        # variables: z (k), v (n); v_i - a (W_i z) <= a x + b for every line
        rows, rhs = [], []
        for i, (a, bl) in enumerate(lines):
            blk = np.zeros((len(a), k + n))
            blk[:, :k] = -a[:, None] * W[i][None, :]
            blk[:, k + i] = 1.0
            rows.append(blk)
            rhs.append(a * x + bl)
        cons = np.zeros((len(A), k + n))
        cons[:, :k] = A
        rows.append(cons)
        rhs.append(b)
        A_ub = np.vstack(rows)
        b_ub = np.concatenate(rhs)
        c = np.concatenate([np.zeros(k), -prob.probs])
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (k + n), method="highs")
        if res.status == 3:
            raise UnboundedObjective(f"one-step LP unbounded at wealth {x}")
        if res.status != 0:
            raise InfeasibleCone(f"one-step LP failed at wealth {x}: {res.message}")
        z = res.x[:k]
        if tiebreak:
            z = _min_norm(prob, A_ub, b_ub, -res.fun, k, n)
        zs[g] = z
    return zs


def _min_norm(prob, A_ub, b_ub, opt, k, n):
    # minimize sum |(Mz)_j| over {z : objective >= opt - tol}
    M = prob.M
    d = M.shape[0]
    tol = 1e-9 * max(1.0, abs(opt))
    nv = k + n + d
    rows = [np.hstack([A_ub, np.zeros((len(A_ub), d))])]
    rhs = [b_ub]
    obj = np.zeros(nv)
    obj[k:k + n] = -prob.probs
    rows.append(obj[None, :])
    rhs.append(np.array([-(opt - tol)]))
    # |xi_j| <= t_j
    for sgn in (1.0, -1.0):
        blk = np.zeros((d, nv))
        blk[:, :k] = sgn * M
        blk[:, k + n:] = -np.eye(d)
        rows.append(blk)
        rhs.append(np.zeros(d))
    cost = np.zeros(nv)
    cost[k + n:] = 1.0
    res = linprog(cost, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs),
                  bounds=[(None, None)] * (k + n) + [(0, None)] * d, method="highs")
    return res.x[:k] if res.status == 0 else np.zeros(k)


# ---------------------------------------------------------------------------

def solve_one_step(prob: OneStepProblem, method: str = "auto") -> OneStepSolution:
    m = len(prob.grid)
    d = prob.increments.shape[1]
    k = prob.k if (prob.cone is not None or prob.D.dim > 0) else 0
    if k == 0:
        z = np.zeros((m, 0))
    else:
        n = len(prob.probs)
        if method == "auto":
            if k >= 2 and n == k + 1 and prob.cone is None:
                method = "dual"
            else:
                method = "search" if k <= 2 else "lp"
        if method == "dual":
            z, ok = _solve_dual(prob)
            if not np.all(ok):
                sub = OneStepProblem(prob.increments, prob.probs, prob.V, prob.D, prob.grid[~ok],
                                     prob.phimax, prob.cone)
                if k == 2:
                    ze, ok_e = _solve_edges(sub)
                    if not np.all(ok_e):
                        sub2 = OneStepProblem(prob.increments, prob.probs, prob.V, prob.D,
                                              sub.grid[~ok_e], prob.phimax, prob.cone)
                        ze[~ok_e] = _solve_search(sub2)
                    z[~ok] = ze
                else:
                    z[~ok] = _solve_lp(sub)
        elif method == "search":
            if k > 2:
                raise ValueError("search method supports at most 2 strategy dimensions")
            z = _solve_search(prob)
        elif method == "lp":
            z = _solve_lp(prob)
        else:
            raise ValueError(f"unknown method {method!r}")
    M = prob.M if k else np.zeros((d, 0))
    xi = z @ M.T if k else np.zeros((m, d))
    W = prob.increments @ M if k else np.zeros((len(prob.probs), 0))
    pay = z @ W.T if k else np.zeros((m, len(prob.probs)))
    vals = sum(p * f.eval(prob.grid + pay[:, i]) for i, (p, f) in enumerate(zip(prob.probs, prob.V)))
    vals = np.asarray(vals, dtype=float)
    if k:
        A, b, box = prob.constraints()
        act = (z @ A[box].T) >= b[box] * (1 - 1e-12) - 1e-12
        interior = ~np.any(act, axis=1)
    else:
        interior = np.ones(m, bool)
    G = PLConcave(prob.grid, vals)
    return OneStepSolution(prob.grid, G, z, xi, interior, method if k else "trivial")


def random_feasible(prob: OneStepProblem, n: int, rng) -> np.ndarray:
    """Uniform samples z of the feasible set (rejection from the bounding box)."""
    A, b, _ = prob.constraints()
    k = prob.k
    if k == 0:
        return np.zeros((n, 0))
    lo = np.empty(k)
    hi = np.empty(k)
    for j in range(k):
        e = np.zeros(k)
        e[j] = 1
        lo[j] = linprog(e, A_ub=A, b_ub=b, bounds=[(None, None)] * k, method="highs").x[j]
        hi[j] = linprog(-e, A_ub=A, b_ub=b, bounds=[(None, None)] * k, method="highs").x[j]
    out: List[np.ndarray] = []
    while sum(len(o) for o in out) < n:
        cand = rng.uniform(lo, hi, size=(4 * n, k))
        out.append(cand[np.all(cand @ A.T <= b + 1e-12, axis=1)])
    return np.vstack(out)[:n]
