import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bookmaking.errors import PolicyError, ValidationError
from bookmaking.intensity import IntensityModel
from bookmaking.wealth import (LogRatioRootFeedback, SqrtFeedback, StaticPolicy, TwoPiece,
                               method3_consistency, optimal_price_logratio, optimal_price_ratio,
                               pointwise_optimize, wealth_value_constantp)

GRID = np.round(np.arange(1, 100) / 100, 2)


def grid_argmax(obj, n=200_001):
    u = np.linspace(1e-6, 1 - 1e-6, n)
    k = int(np.argmax(obj(u)))
    lo, hi = u[max(k - 1, 0)], u[min(k + 1, n - 1)]
    u = np.linspace(lo, hi, n)
    return u[int(np.argmax(obj(u)))]


def test_ratio_closed_form_examples():
    assert optimal_price_ratio(0.25) == pytest.approx(0.5)
    assert optimal_price_ratio(0.81) == pytest.approx(0.9)
    assert optimal_price_ratio(1 - 1e-12) == pytest.approx(1.0)
    m = IntensityModel("ratio")
    assert grid_argmax(lambda u: m.rate(0.25, u) * (u - 0.25)) == pytest.approx(0.5, abs=1e-6)


def test_logratio_root_examples():
    r = optimal_price_logratio(0.5)
    assert abs(r * (1 + math.log(r)) - 0.5) <= 1e-12
    assert r == pytest.approx(0.7299, abs=1e-4)
    assert optimal_price_logratio(1 - 1e-15) == pytest.approx(1.0, abs=1e-6)
    assert optimal_price_logratio(1e-15) == pytest.approx(math.exp(-1), abs=1e-6)


@given(st.floats(1e-6, 1 - 1e-6))
def test_logratio_root_bracket_and_residual(p):
    r = optimal_price_logratio(p)
    assert math.exp(-1) < r < 1
    assert abs(r * (1 + math.log(r)) - p) <= 1e-12


def test_logratio_price_map_slope():
    p = np.linspace(0.02, 0.98, 97)
    r = optimal_price_logratio(p)
    slope = np.diff(r) / np.diff(p)
    assert np.all((slope > 0.5) & (slope < 1.0))
    assert np.all(np.diff(slope) < 0)


def test_sqrt_is_increasing_concave():
    u = optimal_price_ratio(GRID)
    assert np.all(np.diff(u) > 0)
    assert np.all(np.diff(u, 2) < 0)


@pytest.mark.parametrize("family", ["ratio", "logratio"])
def test_closed_form_matches_brute_force(family):
    m = IntensityModel(family)
    closed = optimal_price_ratio(GRID) if family == "ratio" else optimal_price_logratio(GRID)
    for p, c in zip(GRID[::7], closed[::7]):
        assert grid_argmax(lambda u: m.rate(p, u) * (u - p)) == pytest.approx(c, abs=1e-6)


def test_pointwise_examples():
    np.testing.assert_allclose(pointwise_optimize(IntensityModel("ratio"), [0.5, 0.5]),
                               [math.sqrt(0.5)] * 2, atol=1e-9)
    assert pointwise_optimize(IntensityModel("exponential", 1.0, 10.0), 0.6) == pytest.approx(0.7, abs=1e-9)
    for m in (IntensityModel("ratio"), IntensityModel("logratio"), IntensityModel("exponential", 1.0, 4.0)):
        assert m.rate(0.4, 0.4) * (0.4 - 0.4) == 0.0


@pytest.mark.parametrize("family", ["ratio", "logratio"])
def test_three_methods_agree(family):
    m = IntensityModel(family)
    m1 = pointwise_optimize(m, GRID)
    m2 = optimal_price_ratio(GRID) if family == "ratio" else optimal_price_logratio(GRID)
    m3 = method3_consistency(GRID, m).price
    np.testing.assert_allclose(m1, m2, atol=1e-8)
    np.testing.assert_allclose(m3, m2, atol=1e-8)


def test_method3_examples():
    res = method3_consistency(0.25)
    assert res.rate[0] == pytest.approx(1 / 3)
    assert res.price[0] == pytest.approx(0.5)
    lr = method3_consistency(0.5, IntensityModel("logratio"))
    assert lr.price[0] == pytest.approx(optimal_price_logratio(0.5), abs=1e-12)
    sym = method3_consistency([0.3, 0.3, 0.3])
    assert np.ptp(sym.rate) == 0.0
    ex = method3_consistency(0.6, IntensityModel("exponential", 2.0, 10.0))
    assert ex.price[0] == pytest.approx(0.7)


def test_wealth_value_examples():
    assert wealth_value_constantp(1.0, 3.0, [0.2, 0.8], [1.0, 2.0], 1.0) == pytest.approx(3 - 0.2 - 1.6)
    assert wealth_value_constantp(0, 0, [0.5, 0.5], [0, 0], 1.0) == pytest.approx(2 * (1 - math.sqrt(0.5)) ** 2)
    assert wealth_value_constantp(0, 0, [0.5, 0.5], [0, 0], 1.0) == pytest.approx(0.1715729, abs=1e-7)
    v = wealth_value_constantp(0, 0, [0.25, 0.75], [0, 0], 1.0)
    oracle = 0.25 * 0.25 / 0.75 + 0.75 * (1 - math.sqrt(0.75)) ** 2 / 0.25
    assert v == pytest.approx(oracle, rel=1e-14)
    assert v == pytest.approx(0.13718, abs=1e-5)


@given(st.floats(0.05, 0.95), st.floats(0, 2), st.floats(0, 3))
def test_value_signs(p, t, q):
    T = 2.0
    v = lambda t_, x_, q_: wealth_value_constantp(t_, x_, [p, 1 - p], [q_, 0.0], T)
    h = 1e-4
    assert v(t, 1.0 + h, q) > v(t, 1.0, q)  # increasing in wealth
    assert v(t, 1.0, q + h) < v(t, 1.0, q)  # decreasing in liabilities
    if t + h <= T:
        assert v(t + h, 1.0, q) < v(t, 1.0, q)  # value of remaining time


def test_policies():
    p = np.array([[0.25, 0.75], [0.5, 0.5]])
    np.testing.assert_allclose(SqrtFeedback()(0, p, None), np.sqrt(p))
    m = IntensityModel("ratio", 2.0)
    np.testing.assert_allclose(SqrtFeedback().rates(m, 0, p, None), m.rate(p, np.sqrt(p)), rtol=1e-13)
    assert SqrtFeedback().rate_bound(m) == 1.0
    lr = IntensityModel("logratio")
    np.testing.assert_allclose(LogRatioRootFeedback().rates(lr, 0, p, None),
                               lr.rate(p, optimal_price_logratio(p)), rtol=1e-12)
    with pytest.raises(PolicyError):
        StaticPolicy([0.0, 0.5]).rates(IntensityModel("ratio"), 0, p, None)
    with pytest.raises(ValidationError):
        StaticPolicy([1.5])


def test_two_piece():
    tp = TwoPiece([0.3, 0.6], [0.7, 0.6], [0.25, 1.0], tau=2.0)
    np.testing.assert_allclose(tp(0.1, np.array([0.5, 0.5]), None), [0.3, 0.6])
    np.testing.assert_allclose(tp(1.0, np.array([0.5, 0.5]), None), [0.7, 0.6])
    assert not tp.is_static
    assert TwoPiece([0.4], [0.4], [0.3], 1.0).is_static
