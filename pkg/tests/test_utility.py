import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from utilmax import (Example73, Exponential, ExponentialBelowLinearAbove, LinearBelowPowerAbove,
                     MalformedInput, PiecewiseLinear, check_ae_minus, check_ae_plus, linear, shift,
                     utility_from_dict)

SMOOTH = [Exponential(1.0), Exponential(0.3), LinearBelowPowerAbove(0.5), ExponentialBelowLinearAbove(2.0)]


def test_exponential_closed_form():
    u = Exponential(2.0)
    x = np.array([-1.0, 0.0, 0.5])
    assert np.allclose(u.eval(x), 1 - np.exp(-2 * x), rtol=0, atol=1e-15)
    assert np.allclose(u.left_derivative(x), 2 * np.exp(-2 * x))
    assert u.eval(0.0) == 0.0


@pytest.mark.parametrize("u", SMOOTH, ids=repr)
def test_derivatives_match_finite_differences(u):
    x = np.linspace(-3, 3, 61) + 1e-3
    h = 1e-6
    fd = (u.eval(x + h) - u.eval(x - h)) / (2 * h)
    assert np.allclose(u.left_derivative(x), fd, rtol=1e-6, atol=1e-6)
    fd2 = (u.left_derivative(x + h) - u.left_derivative(x - h)) / (2 * h)
    assert np.allclose(u.second_derivative(x), fd2, rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize("u", SMOOTH + [Example73(20), PiecewiseLinear([-1, 2], [3, 1, 0.5])], ids=repr)
def test_concave_nondecreasing(u):
    x = np.linspace(-30, 30, 2001)
    y = u.eval(x)
    assert np.all(np.diff(y) >= -1e-12)
    mid = (y[:-2] + y[2:]) / 2
    assert np.all(y[1:-1] >= mid - 1e-9)


def test_density_bound_variants():
    x = np.linspace(-50, 50, 1001)
    assert np.all(LinearBelowPowerAbove(0.4).left_derivative(x) <= 1.0)
    assert np.all(ExponentialBelowLinearAbove(1.0).left_derivative(x) >= 1.0)


def test_piecewise_linear_values():
    u = PiecewiseLinear([-1, 0, 1], [20, 3, 1, 0.5])
    assert u.eval(0.0) == 0.0
    assert u.eval(1.0) == 1.0
    assert u.eval(3.0) == 2.0
    assert u.eval(-1.0) == -3.0
    assert u.eval(-2.0) == -23.0
    assert u.left_derivative(1.0) == 1.0
    assert u.right_derivative(1.0) == 0.5
    assert linear(2.0).eval(-4.0) == -8.0


def test_example73_slopes_and_values():
    u = Example73(60)
    assert u.eval(1.0) == pytest.approx(2.0)
    assert u.eval(-1.0) == pytest.approx(-2.0)
    # left derivative at -1 is the slope on (-2, -1]
    assert u.left_derivative(-1.0) == pytest.approx(3 - 1 / 4)
    assert u.right_derivative(-1.0) == pytest.approx(2.0)
    assert u.left_derivative(100.0) == 1.0
    assert u.left_derivative(-100.0) == 3.0
    for n in (1, 5, 30, 60):
        eu = 0.75 * u.eval(float(n)) + 0.25 * u.eval(float(-n))
        assert abs(eu - math.fsum(1 / j ** 2 for j in range(1, n + 1))) <= 1e-12


@pytest.mark.parametrize("bad", [
    ([0, 1], [1, 2, 0.5]),
    ([1, 0], [2, 1, 0]),
    ([0], [1, -1]),
    ([0], [1]),
])
def test_piecewise_linear_rejects(bad):
    with pytest.raises(MalformedInput):
        PiecewiseLinear(*bad)


def test_shifted_utility():
    base = Exponential(1.0)
    s = shift(base, 0.7)
    x = np.array([-1.0, 0.0, 2.0])
    assert np.allclose(s.eval(x), base.eval(x + 0.7) - base.eval(0.7))
    assert np.allclose(s.left_derivative(x), base.left_derivative(x + 0.7))


@pytest.mark.parametrize("u", [Exponential(0.5), PiecewiseLinear([0], [2, 1]), Example73(7),
                               LinearBelowPowerAbove(0.3), ExponentialBelowLinearAbove(1.5),
                               shift(Exponential(1.0), 1.0)], ids=repr)
def test_json_roundtrip(u):
    v = utility_from_dict(u.to_dict())
    x = np.linspace(-5, 5, 41)
    assert np.array_equal(u.eval(x), v.eval(x))


def test_from_dict_errors_and_ae_fields():
    with pytest.raises(MalformedInput):
        utility_from_dict({"params": {}})
    with pytest.raises(MalformedInput):
        utility_from_dict({"variant": "quadratic"})
    with pytest.raises(MalformedInput):
        utility_from_dict({"variant": "piecewise_linear", "params": {"slopes": [1]}})
    u = utility_from_dict({"variant": "exponential", "params": {"a": 2},
                           "ae": {"gamma": 0.6, "alpha": 1, "xtilde": 1}})
    assert (u.gamma, u.alpha, u.xtilde) == (0.6, 1, 1)


# growth checks -------------------------------------------------------------

def test_ae_plus_exponential():
    # U(lam x) <= lam^g U(x) at x = 1 and lam -> 1 needs g >= U'(1)/U(1) = 1/(e - 1)
    edge = 1 / (math.e - 1)
    assert check_ae_plus(Exponential(1.0), 0.6, 1.0).passed
    assert not check_ae_plus(Exponential(1.0), edge - 0.01, 1.0).passed
    rep = check_ae_plus(Exponential(1.0), 0.6, 1.0)
    assert rep.C == pytest.approx(1 - math.exp(-1))


def test_ae_plus_power_above():
    rep = check_ae_plus(LinearBelowPowerAbove(0.5), 0.6, 40.0)
    assert rep.passed
    assert rep.elasticity == pytest.approx(0.5, abs=0.01)
    assert not check_ae_plus(LinearBelowPowerAbove(0.5), 0.55, 1.0).passed
    # linear growth has elasticity one and fails for every gamma < 1
    assert not check_ae_plus(ExponentialBelowLinearAbove(1.0), 0.9, 1.0).passed


def test_ae_minus():
    # at x = xt and lam -> 1 the inequality needs (1 + alpha) <= xt U'(xt) / U(xt)
    assert check_ae_minus(Exponential(1.0), 1.0, -2.0).passed
    assert check_ae_minus(Exponential(1.0), 0.5, -1.0).passed
    edge = -1 * math.e / (1 - math.e) - 1
    assert check_ae_minus(Exponential(1.0), edge - 0.05, -1.0).passed
    assert not check_ae_minus(Exponential(1.0), edge + 0.05, -1.0).passed
    assert not check_ae_minus(LinearBelowPowerAbove(0.5), 0.5, -1.0).passed
    with pytest.raises(ValueError):
        check_ae_minus(Exponential(1.0), 1.0, 1.0)
    with pytest.raises(ValueError):
        check_ae_plus(Exponential(1.0), 1.5, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=5, unique=True),
       st.lists(st.floats(0, 10), min_size=6, max_size=6))
def test_piecewise_linear_matches_integral(bps, raw):
    bps = sorted(bps)
    if np.any(np.diff(bps) < 1e-3):
        return
    slopes = sorted(raw[:len(bps) + 1], reverse=True)
    u = PiecewiseLinear(bps, slopes)
    # U(x) = integral of U' from 0 to x, by midpoint quadrature on a fine mesh
    for x in (-7.0, -1.3, 0.4, 6.0):
        t = np.linspace(0, x, 20001)
        mids = (t[1:] + t[:-1]) / 2
        integral = float(np.sum(u.left_derivative(mids) * np.diff(t)))
        assert u.eval(x) == pytest.approx(integral, abs=1e-2)


def test_growth_checks_reject_asymptotically_linear_utilities():
    assert not check_ae_plus(Example73(100), 0.9, 1.0).passed
    assert not check_ae_minus(Example73(100), 0.5, -1.0).passed
    assert not check_ae_minus(linear(), 0.3, -1.0).passed
    assert Example73(100).left_derivative(2.0) == pytest.approx(1.25)
