import math

import numpy as np
import pytest

from utilmax import (Example73, Exponential, InfeasibleCone, LinearBelowPowerAbove, OneStepProblem, PLConcave,
                     PiecewiseLinear, Subspace, conditional_dist, from_utility, solve_one_step,
                     span_subspace, uniform_tree)
from utilmax.one_step import random_feasible


def problem(Y, p, u, grid, phimax=1e3, cone=None, V=None):
    Y = np.asarray(Y, dtype=float)
    from utilmax.tree import ConditionalDist
    D = span_subspace(ConditionalDist(0, Y, np.asarray(p, dtype=float)))
    V = V or [from_utility(u, grid)] * len(p)
    return OneStepProblem(Y, p, V, D, grid, phimax, cone)


def test_binomial_exponential_closed_form():
    grid = np.linspace(-3, 3, 2049)
    h = grid[1] - grid[0]
    sol = solve_one_step(problem([[1], [-1]], [0.75, 0.25], Exponential(1.0), grid))
    mid = slice(700, 1350)
    assert np.all(np.abs(sol.xi[mid, 0] - 0.5 * math.log(3)) <= 2 * h)
    exact = 1 - np.exp(-grid[mid]) * math.sqrt(3) / 2
    # PL error of the interpolated utility: at most h^2/8 max|U''| over the reach
    bound = h * h / 8 * math.exp(3)
    assert np.all(np.abs(sol.G.v[mid] - exact) <= bound + 1e-12)
    assert sol.attained_interior[mid].all()


def test_example73_one_step_hits_the_box():
    u = Example73(60)
    sol = solve_one_step(problem([[1], [-1]], [0.75, 0.25], u, np.arange(-200.0, 201.0), phimax=50))
    i = 200  # x = 0
    assert sol.xi[i, 0] == pytest.approx(50.0)
    assert not sol.attained_interior[i]
    assert sol.G.v[i] == pytest.approx(math.fsum(1 / j ** 2 for j in range(1, 51)), abs=1e-12)


def test_zero_support_is_trivial():
    grid = np.linspace(-1, 1, 11)
    V = [PLConcave(grid, grid), PLConcave(grid, 2 * grid)]
    prob = problem([[0.0, 0.0], [0.0, 0.0]], [0.5, 0.5], None, grid, V=V)
    sol = solve_one_step(prob)
    assert sol.method == "trivial"
    assert np.allclose(sol.G.v, 1.5 * grid)
    assert np.allclose(sol.xi, 0)


def _rand_problem(rng, d, n, grid, u):
    Y = rng.normal(size=(n, d))
    q = rng.dirichlet(np.ones(n) * 2)
    Y -= q @ Y
    p = rng.dirichlet(np.ones(n) * 2) * 0.8 + 0.2 / n
    # child value functions that differ: the utility shifted by a per-child constant
    V = [from_utility(u, grid + s).shifted(s) for s in rng.uniform(-0.3, 0.3, n)]
    return problem(Y, p / p.sum(), None, grid, phimax=50.0, V=V)


@pytest.mark.parametrize("d, n", [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)])
def test_beats_random_feasible_strategies(d, n):
    rng = np.random.default_rng(100 * d + n)
    grid = np.linspace(-4, 4, 81)
    u = LinearBelowPowerAbove(0.3)
    for _ in range(3):
        prob = _rand_problem(rng, d, n, grid, u)
        sol = solve_one_step(prob)
        Z = random_feasible(prob, 2000, rng)
        for j in range(0, len(grid), 10):
            best = prob.objective(grid[j], Z).max()
            assert sol.G.v[j] >= best - 1e-9 * max(1, abs(best))


@pytest.mark.parametrize("d, n", [(1, 3), (2, 3), (2, 4)])
def test_solvers_agree(d, n):
    rng = np.random.default_rng(7 + d + n)
    grid = np.linspace(-3, 3, 61)
    prob = _rand_problem(rng, d, n, grid, Exponential(1.0))
    ref = solve_one_step(prob, "lp").G.v
    methods = ["search"] + (["dual"] if n == d + 1 else [])
    for m in methods:
        got = solve_one_step(prob, m).G.v
        # HiGHS works to about 1e-8 relative; the other solvers are exact up to rounding
        assert np.allclose(got, ref, rtol=1e-7, atol=1e-7), m


def test_optimizer_lies_in_support_span():
    grid = np.linspace(-3, 3, 61)
    Y = np.array([[1.0, 2.0], [-0.5, -1.0], [0.25, 0.5]])
    prob = problem(Y, [0.3, 0.4, 0.3], Exponential(1.0), grid)
    sol = solve_one_step(prob)
    ortho = sol.xi - sol.xi @ prob.D.basis.T @ prob.D.basis
    assert np.abs(ortho).max() <= 1e-10


def test_doubling_position_bound_leaves_interior_optimum():
    rng = np.random.default_rng(3)
    grid = np.linspace(-3, 3, 61)
    prob = _rand_problem(rng, 2, 3, grid, Exponential(1.0))
    a = solve_one_step(prob)
    prob.phimax *= 2
    b = solve_one_step(prob)
    assert a.attained_interior.all()
    assert np.allclose(a.G.v, b.G.v, atol=1e-12)


def test_short_sale_constraint_down_drift():
    grid = np.linspace(-2, 2, 41)
    prob = problem([[1], [-1]], [0.25, 0.75], Exponential(1.0), grid, cone=np.array([[1.0]]))
    sol = solve_one_step(prob)
    assert np.allclose(sol.xi, 0)
    assert np.allclose(sol.G.v, from_utility(Exponential(1.0), grid).v)


def test_value_is_concave_and_at_least_no_trade():
    rng = np.random.default_rng(5)
    grid = np.linspace(-3, 3, 61)
    u = PiecewiseLinear([-1, 0, 1], [4, 2, 1, 0.5])
    prob = _rand_problem(rng, 1, 3, grid, u)
    sol = solve_one_step(prob)
    sol.G.check()
    no_trade = sum(p * f.eval(grid) for p, f in zip(prob.probs, prob.V))
    assert np.all(sol.G.v >= no_trade - 1e-12)


def test_bad_arguments():
    grid = np.linspace(-1, 1, 5)
    prob = problem([[1], [-1]], [0.5, 0.5], Exponential(1.0), grid)
    with pytest.raises(ValueError):
        solve_one_step(prob, "newton")
    with pytest.raises(InfeasibleCone):
        problem([[1], [-1]], [0.5, 0.5], Exponential(1.0), grid, cone=np.array([[0.0]]))
    with pytest.raises(ValueError):
        OneStepProblem(np.array([[1.0]]), np.array([1.0]), [], Subspace.full(1), grid)
    prob3 = problem(np.eye(3).tolist() + [[-1, -1, -1]], [0.25] * 4, Exponential(1.0), grid)
    with pytest.raises(ValueError):
        solve_one_step(prob3, "search")


def test_node_of_a_tree():
    tr = uniform_tree(1, 1, [[1], [0], [-2]], [0.5, 0.3, 0.2])
    dist = conditional_dist(tr, 0)
    grid = np.linspace(-2, 2, 21)
    u = Exponential(1.0)
    prob = OneStepProblem(dist.increments, dist.probs, [from_utility(u, grid)] * 3, span_subspace(dist), grid)
    sol = solve_one_step(prob)
    assert sol.attained_interior.all()
    # first-order condition of the interpolated problem: xi within a grid step of the exact optimizer
    xs = np.linspace(-1, 1, 20001)
    exact = xs[np.argmax(0.5 * u.eval(xs) + 0.3 * u.eval(0 * xs) + 0.2 * u.eval(-2 * xs))]
    assert abs(sol.xi_at(0.0)[0] - exact) <= 0.2 + 1e-3
