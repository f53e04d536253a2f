"""Dense two-phase simplex over exact rationals.

Used for the small feasibility problems of arbitrage detection, where an exact
yes/no answer is worth more than speed. Bland's rule prevents cycling.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence

Frac = Fraction


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: Optional[List[Fraction]] = None
    value: Optional[Fraction] = None


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


class _Tableau:
    def __init__(self, rows: List[List[Fraction]], rhs: List[Fraction], basis: List[int]):
        self.A = rows
        self.b = rhs
        self.basis = basis

    def pivot(self, r: int, j: int) -> None:
        A, b = self.A, self.b
        piv = A[r][j]
        row = [a / piv for a in A[r]]
        A[r] = row
        b[r] = b[r] / piv
        for i in range(len(A)):
            if i != r and A[i][j] != 0:
                f = A[i][j]
                Ai = A[i]
                A[i] = [x - f * y for x, y in zip(Ai, row)]
                b[i] -= f * b[r]
        self.basis[r] = j

    def reduced_costs(self, c: List[Fraction]) -> List[Fraction]:
        cb = [c[k] for k in self.basis]
        n = len(c)
        out = list(c)
        for i, ci in enumerate(cb):
            if ci != 0:
                Ai = self.A[i]
                for j in range(n):
                    if Ai[j] != 0:
                        out[j] -= ci * Ai[j]
        return out

    def run(self, c: List[Fraction], allowed: Sequence[bool]) -> str:
        while True:
            red = self.reduced_costs(c)
            enter = next((j for j in range(len(c)) if allowed[j] and red[j] < 0), None)
            if enter is None:
                return "optimal"
            best, leave = None, None
            for i, Ai in enumerate(self.A):
                if Ai[enter] > 0:
                    ratio = self.b[i] / Ai[enter]
                    if best is None or ratio < best or (ratio == best and self.basis[i] < self.basis[leave]):
                        best, leave = ratio, i
            if leave is None:
                return "unbounded"
            self.pivot(leave, enter)


def linprog_exact(c: Sequence, A_ub: Sequence[Sequence] = (), b_ub: Sequence = (),
                  A_eq: Sequence[Sequence] = (), b_eq: Sequence = (),
                  free: Sequence[int] = ()) -> LPResult:
    """Minimize c.x subject to A_ub x <= b_ub, A_eq x = b_eq, x >= 0 except ``free``.

    Inputs may be ints, floats or Fractions; floats are converted exactly.
    """
    n = len(c)
    free = sorted(set(free))
    # column layout: original vars, negative parts of free vars, slacks, artificials
    cols_neg = {j: n + k for k, j in enumerate(free)}
    n_x = n + len(free)
    n_ub = len(A_ub)
    n_rows = n_ub + len(A_eq)
    n_tot = n_x + n_ub + n_rows

    rows, rhs = [], []
    for i, (arow, bi) in enumerate(list(zip(A_ub, b_ub)) + list(zip(A_eq, b_eq))):
        row = [Frac(0)] * n_tot
        for j, a in enumerate(arow):
            a = _frac(a)
            row[j] = a
            if j in cols_neg:
                row[cols_neg[j]] = -a
        if i < n_ub:
            row[n_x + i] = Frac(1)
        bi = _frac(bi)
        if bi < 0:
            row = [-a for a in row]
            bi = -bi
        row[n_x + n_ub + i] = Frac(1)
        rows.append(row)
        rhs.append(bi)

    art0 = n_x + n_ub
    tab = _Tableau(rows, rhs, [art0 + i for i in range(n_rows)])
    phase1 = [Frac(0)] * art0 + [Frac(1)] * n_rows
    tab.run(phase1, [True] * n_tot)
    if sum(tab.b[i] for i, k in enumerate(tab.basis) if k >= art0) != 0:
        return LPResult("infeasible")

    # drive remaining (zero-level) artificials out of the basis; drop redundant rows
    i = 0
    while i < len(tab.A):
        if tab.basis[i] >= art0:
            j = next((j for j in range(art0) if tab.A[i][j] != 0), None)
            if j is None:
                del tab.A[i], tab.b[i], tab.basis[i]
                continue
            tab.pivot(i, j)
        i += 1

    cost = [Frac(0)] * n_tot
    for j, cj in enumerate(c):
        cost[j] = _frac(cj)
        if j in cols_neg:
            cost[cols_neg[j]] = -cost[j]
    status = tab.run(cost, [j < art0 for j in range(n_tot)])
    if status == "unbounded":
        return LPResult("unbounded")
    sol = [Frac(0)] * n_tot
    for r, k in enumerate(tab.basis):
        sol[k] = tab.b[r]
    x = [sol[j] - (sol[cols_neg[j]] if j in cols_neg else 0) for j in range(n)]
    return LPResult("optimal", x, sum((_frac(cj) * xj for cj, xj in zip(c, x)), Frac(0)))
