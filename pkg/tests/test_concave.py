import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from utilmax import Exponential, NotConcaveOnGrid, PLConcave, PiecewiseLinear, from_utility


def random_concave(rng, m=8):
    x = np.cumsum(rng.uniform(0.1, 2.0, m)) - 5
    s = np.sort(rng.uniform(0, 4, m + 1))[::-1]
    v = rng.normal() + np.concatenate([[0.0], np.cumsum(s[1:-1] * np.diff(x))])
    return PLConcave(x, v, s[0], s[-1])


def test_interpolation_and_extrapolation():
    f = PLConcave([0, 1, 3], [0, 2, 3], left_slope=5, right_slope=0.25)
    assert f.eval(0.5) == 1.0
    assert f.eval(2.0) == 2.5
    assert f.eval(-1.0) == -5.0
    assert f.eval(7.0) == 4.0
    assert f.slopes.tolist() == [5, 2, 0.5, 0.25]
    assert f.left_derivative(1.0) == 2 and f.right_derivative(1.0) == 0.5
    assert f(np.array([0.0, 3.0])).tolist() == [0.0, 3.0]


def test_default_end_slopes_continue_the_edge_pieces():
    f = PLConcave([0, 1, 2], [0, 1, 1.5])
    assert f.left_slope == 1.0 and f.right_slope == 0.5


@pytest.mark.parametrize("x, v, kw", [
    ([0, 1, 2], [0, 1, 3], {}),
    ([0, 1], [0, -1], {}),
    ([0, 1], [0, 1], {"right_slope": 2.0}),
    ([0, 1], [0, 1], {"right_slope": -0.5}),
])
def test_rejects_non_concave_or_decreasing(x, v, kw):
    with pytest.raises(NotConcaveOnGrid):
        PLConcave(x, v, **kw)


@pytest.mark.parametrize("x, v", [([0, 0], [1, 1]), ([1, 0], [0, 1]), ([], []), ([0, 1], [0])])
def test_rejects_bad_breakpoints(x, v):
    with pytest.raises(ValueError):
        PLConcave(x, v)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 12))
def test_min_of_supporting_lines_reproduces_function(seed, m):
    rng = np.random.default_rng(seed)
    f = random_concave(rng, m)
    a, b = f.lines_array()
    xs = np.linspace(f.x[0] - 10, f.x[-1] + 10, 2001)
    env = np.min(a[:, None] * xs[None, :] + b[:, None], axis=0)
    assert np.allclose(env, f.eval(xs), atol=1e-9)
    # every line supports f: it is never below the function
    assert np.all(a[:, None] * xs[None, :] + b[:, None] >= f.eval(xs)[None, :] - 1e-9)
    assert np.all(np.diff(a) < 0)


def test_collinear_pieces_merge():
    f = PLConcave([0, 1, 2, 3], [0, 1, 2, 2.5], left_slope=1.0, right_slope=0.5)
    assert f.sup_lines() == [(1.0, 0.0), (0.5, 1.0)]


def test_shifted():
    f = PLConcave([0, 1, 3], [0, 2, 3])
    g = f.shifted(0.5)
    xs = np.linspace(-3, 5, 33)
    assert np.allclose(g.eval(xs), f.eval(xs + 0.5))


def test_from_utility_is_a_chord_interpolant():
    u = Exponential(1.0)
    grid = np.linspace(-2, 2, 41)
    f = from_utility(u, grid)
    assert np.allclose(f.eval(grid), u.eval(grid))
    xs = np.linspace(-4, 4, 801)
    # chords of a concave function lie below it; the gap is O(h^2 max|U''|)
    gap = u.eval(xs) - f.eval(xs)
    inside = (xs >= -2) & (xs <= 2)
    assert np.all(gap[inside] >= -1e-12)
    assert gap[inside].max() <= 0.1 ** 2 / 8 * np.exp(2) + 1e-12


def test_from_utility_exact_on_piecewise_linear():
    u = PiecewiseLinear([-1, 0.5], [3, 1, 0.2])
    f = from_utility(u, np.linspace(-3, 3, 25))
    xs = np.linspace(-3, 3, 97)
    assert np.allclose(f.eval(xs), u.eval(xs), atol=1e-12)


def test_csv_export():
    f = PLConcave([0, 1, 3], [0, 2, 3])
    rows = list(csv.DictReader(io.StringIO(f.to_csv())))
    assert [(float(r["x"]), float(r["f"])) for r in rows] == [(0, 0), (1, 2), (3, 3)]
