"""Support geometry of one-period increments and no-arbitrage certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DegenerateSupport
from .simplex import linprog_exact
from .tree import ConditionalDist, ScenarioTree, conditional_dist

RANK_TOL = 1e-9


@dataclass(frozen=True)
class Subspace:
    """Linear subspace of R^d with orthonormal basis stored as rows."""

    d: int
    basis: np.ndarray  # shape (dim, d)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def coords(self, xi) -> np.ndarray:
        return self.basis @ np.asarray(xi, dtype=float)

    def from_coords(self, z) -> np.ndarray:
        if self.dim == 0:
            return np.zeros(self.d)
        return self.basis.T @ np.asarray(z, dtype=float)

    def project(self, xi) -> np.ndarray:
        return self.from_coords(self.coords(xi))

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(d, np.zeros((0, d)))

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(d, np.eye(d))


def _basis_of(points: np.ndarray, d: int, rank_tol: float) -> Subspace:
    if points.size == 0:
        return Subspace.zero(d)
    _, s, vt = np.linalg.svd(points, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return Subspace.zero(d)
    r = int(np.sum(s > rank_tol * s[0]))
    if r == d:
        return Subspace.full(d)
    return Subspace(d, vt[:r].copy())


def support_subspace(dist: ConditionalDist, rank_tol: float = RANK_TOL):
    """Direction space of the affine hull of the support, and the hull's offset.

    The offset is the component of the hull orthogonal to the direction space;
    it is zero exactly when the hull passes through the origin.
    """
    Y = np.asarray(dist.increments, dtype=float)
    bary = dist.probs @ Y
    D = _basis_of(Y - bary, Y.shape[1], rank_tol)
    offset = bary - D.project(bary)
    return D, offset


def span_subspace(dist: ConditionalDist, rank_tol: float = RANK_TOL) -> Subspace:
    """Linear span of the support; equals the affine direction space under NA."""
    Y = np.asarray(dist.increments, dtype=float)
    return _basis_of(Y, Y.shape[1], rank_tol)


def project_strategy(xi, D: Subspace) -> np.ndarray:
    return D.project(xi)


@dataclass
class NAVerdict:
    na: bool
    witness: Optional[np.ndarray] = None
    node: Optional[int] = None

    def __bool__(self):
        return self.na


def check_na(dist: ConditionalDist, D: Optional[Subspace] = None,
             cone: Optional[np.ndarray] = None) -> NAVerdict:
    """Exact arbitrage test: is there xi with <xi, y_i> >= 0 for all i and sum > 0?

    With ``cone`` (generating rays as rows) the strategy is restricted to
    xi = rays^T lam, lam >= 0. The witness is scaled so the payoffs sum to 1.
    """
    Y = [[Fraction(float(v)) for v in row] for row in np.asarray(dist.increments, dtype=float)]
    d = len(Y[0])
    if cone is None:
        M = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]  # xi = I z, z free
        free = range(d)
    else:
        R = np.asarray(cone, dtype=float).reshape(-1, d)
        M = [[Fraction(float(v)) for v in r] for r in R]  # xi = R^T lam
        free = ()
    k = len(M)
    # payoff of outcome i per unit of variable j
    P = [[sum((Y[i][a] * M[j][a] for a in range(d)), Fraction(0)) for j in range(k)] for i in range(len(Y))]
    A_ub = [[-v for v in row] for row in P]
    A_ub.append([-sum((P[i][j] for i in range(len(P))), Fraction(0)) for j in range(k)])
    b_ub = [0] * len(P) + [-1]
    res = linprog_exact([0] * k, A_ub, b_ub, free=free)
    if res.status == "infeasible":
        return NAVerdict(True, None, dist.node)
    z = np.array([float(v) for v in res.x])
    xi = np.asarray([[float(v) for v in r] for r in M]).T @ z
    if D is not None and cone is None:
        xi = D.project(xi)
    return NAVerdict(False, xi, dist.node)


@dataclass
class NACertificate:
    node: int
    beta: float
    kappa: float
    witness_directions: List[np.ndarray] = field(default_factory=list)
    worst_loss: float = 0.0  # min over unit p of max_i -<p, y_i>

    def to_dict(self) -> dict:
        return {"node": self.node, "beta": self.beta, "kappa": self.kappa,
                "worst_loss": self.worst_loss,
                "witness_directions": [w.tolist() for w in self.witness_directions]}


def _sphere_points(k: int, n: int, rng) -> np.ndarray:
    p = rng.standard_normal((n, k))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _loss_mass(P: np.ndarray, W: np.ndarray, probs: np.ndarray, delta: float,
               slack: float = 0.0) -> np.ndarray:
    # mass of outcomes with <p, w_i> < -delta, one value per row of P
    dots = P @ W.T
    return ((dots < -delta - slack) * probs).sum(axis=1)


def _circle_candidates(W: np.ndarray, delta: float) -> np.ndarray:
    r = np.linalg.norm(W, axis=1)
    th = np.arctan2(W[:, 1], W[:, 0])
    live = r > delta
    ends = []
    for ti, ri in zip(th[live], r[live]):
        h = math.acos(min(1.0, delta / ri))
        ends += [ti + math.pi - h, ti + math.pi + h]
    if not ends:
        return np.array([0.0])
    e = np.sort(np.mod(ends, 2 * math.pi))
    mids = (e + np.roll(e, -1) + np.where(np.arange(len(e)) == len(e) - 1, 2 * math.pi, 0.0)) / 2
    return np.concatenate([e, mids])


def kappa_of(W: np.ndarray, probs: np.ndarray, delta: float, sphere_tol: float = 1e-4,
             seed: int = 0):
    """min over unit p of P(<p, w> < -delta), and a minimizing direction.

    Exact for dimension 1 and 2 (angular sweep over arc endpoints and cell
    midpoints; ties at arc endpoints are resolved towards exclusion so the value
    never overstates the true minimum). Dimension >= 3 uses random directions
    refined locally down to ``sphere_tol`` radians.
    """
    k = W.shape[1]
    if k == 1:
        P = np.array([[1.0], [-1.0]])
    elif k == 2:
        th = _circle_candidates(W, delta)
        P = np.column_stack([np.cos(th), np.sin(th)])
    else:
        rng = np.random.default_rng(seed)
        P = _sphere_points(k, 20000, rng)
    slack = 1e-12 * max(1.0, float(np.max(np.linalg.norm(W, axis=1))))
    mass = _loss_mass(P, W, probs, delta, slack)
    j = int(np.argmin(mass))
    best, p = float(mass[j]), P[j]
    if k >= 3:
        rng = np.random.default_rng(seed + 1)
        scale = 0.1
        while scale > sphere_tol:
            cand = p + scale * rng.standard_normal((2000, k))
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            m = _loss_mass(cand, W, probs, delta, slack)
            i = int(np.argmin(m))
            if m[i] < best:
                best, p = float(m[i]), cand[i]
            else:
                scale /= 2
    return best, p


def worst_loss(W: np.ndarray, seed: int = 0):
    """min over unit p of max_i -<p, w_i>: positive iff no direction is an arbitrage."""
    k = W.shape[1]
    if k == 1:
        P = np.array([[1.0], [-1.0]])
    elif k == 2:
        diffs = [W[i] - W[j] for i in range(len(W)) for j in range(i + 1, len(W))]
        P = []
        for v in diffs:
            n = np.hypot(v[0], v[1])
            if n > 0:
                q = np.array([-v[1], v[0]]) / n
                P += [q, -q]
        P = np.array(P) if P else np.array([[1.0, 0.0]])
    else:
        P = _sphere_points(k, 20000, np.random.default_rng(seed))
    F = np.max(-(P @ W.T), axis=1)
    j = int(np.argmin(F))
    return float(F[j]), P[j]


def na_certificate(dist: ConditionalDist, D: Subspace, sphere_tol: float = 1e-4,
                   fractions: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9)) -> NACertificate:
    """Pick (beta, kappa) with P(<p, dS> < -beta) >= kappa for every unit p in D.

    beta is chosen among fixed fractions of the worst-case loss level so as to
    maximize beta * kappa.
    """
    if D.dim == 0:
        raise DegenerateSupport(f"node {dist.node}: support subspace is {{0}}")
    W = np.asarray(dist.increments, dtype=float) @ D.basis.T
    probs = np.asarray(dist.probs, dtype=float)
    m, _ = worst_loss(W)
    if not m > 0:
        raise DegenerateSupport(f"node {dist.node}: no positive loss level (arbitrage?)")
    best = None
    for f in fractions:
        delta = f * m
        kap, p = kappa_of(W, probs, delta, sphere_tol)
        if kap > 0 and (best is None or delta * kap > best[0] * best[1]):
            best = (delta, kap, p)
    if best is None:
        raise DegenerateSupport(f"node {dist.node}: no positive kappa found")
    delta, kap, p = best
    return NACertificate(dist.node, float(delta), float(kap), [D.from_coords(p)], float(m))


@dataclass
class TreeVerdict:
    na: bool
    certificates: Dict[int, Optional[NACertificate]]
    dims: Dict[int, int]
    arbitrage_node: Optional[int] = None
    witness: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        out = {"verdict": "NA" if self.na else "arbitrage"}
        if self.na:
            out["nodes"] = {str(n): ({"dim": self.dims[n], **c.to_dict()} if c else {"dim": 0})
                            for n, c in self.certificates.items()}
        else:
            out["node"] = self.arbitrage_node
            out["witness"] = self.witness.tolist()
        return out


def validate_tree(tree: ScenarioTree, cone: Optional[np.ndarray] = None,
                  rank_tol: float = RANK_TOL, sphere_tol: float = 1e-4,
                  certify: bool = True) -> TreeVerdict:
    """Nodewise NA test over the whole tree; first arbitrage node wins."""
    certs: Dict[int, Optional[NACertificate]] = {}
    dims: Dict[int, int] = {}
    for n in tree.interior:
        dist = conditional_dist(tree, n)
        D = span_subspace(dist, rank_tol)
        verdict = check_na(dist, D, cone)
        if not verdict.na:
            return TreeVerdict(False, certs, dims, n, verdict.witness)
        dims[n] = D.dim
        if certify and cone is None and D.dim > 0:
            certs[n] = na_certificate(dist, D, sphere_tol)
        else:
            certs[n] = None
    return TreeVerdict(True, certs, dims)
