import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bookmaking.errors import DomainError, ValidationError
from bookmaking.intensity import IntensityModel, concave_envelope, inverse_rate, rate, revenue

FAMILIES = [IntensityModel("ratio"), IntensityModel("logratio"), IntensityModel("exponential", 1.0, 10.0),
            IntensityModel("ratio", 3.0), IntensityModel("logratio", 0.5)]
interior = st.floats(0.01, 0.99)


def test_rate_examples():
    assert rate(IntensityModel("ratio"), 0.5, 0.5) == pytest.approx(1.0)
    assert rate(IntensityModel("exponential", 1.0, 10.0), 0.6, 0.6) == pytest.approx(1.0)
    for fam in ("ratio", "logratio"):
        assert rate(IntensityModel(fam), 0.3, 1.0) == 0.0
        assert rate(IntensityModel(fam), 0.3, 1 - 1e-12) < 1e-10
        assert rate(IntensityModel(fam), 0.3, 0.0) == math.inf


def test_inverse_rate_examples():
    assert inverse_rate(IntensityModel("ratio"), 0.5, 1.0) == pytest.approx(0.5)
    assert inverse_rate(IntensityModel("logratio"), 0.42, 0.0) == 1.0
    assert inverse_rate(IntensityModel("logratio"), 0.5, 1.0) == pytest.approx(0.5)


def test_inverse_rate_outside_range():
    m = IntensityModel("exponential", 1.0, 10.0)
    with pytest.raises(DomainError):
        m.inverse_rate(0.5, 1e6)
    with pytest.raises(DomainError):
        IntensityModel("ratio").inverse_rate(0.5, -1.0)


def test_revenue_examples():
    assert revenue(IntensityModel("ratio"), 0.5, 1.0) == pytest.approx(0.5)
    for p in (0.1, 0.5, 0.9):
        x = np.linspace(0, 10, 41)
        np.testing.assert_allclose(revenue(IntensityModel("ratio"), p, x), x * p / (p + x * (1 - p)),
                                   rtol=1e-13)


def test_logratio_inflection_at_two():
    m = IntensityModel("logratio")
    p = math.exp(-1)
    h = 1e-4
    f = lambda x: m.revenue(p, x)
    d2 = lambda x: (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    assert d2(1.9) < 0 < d2(2.1)
    assert m.revenue_d2(p, 2.0) == pytest.approx(0.0, abs=1e-15)


@given(interior, st.floats(0.01, 20))
def test_ratio_revenue_concave(p, x):
    m = IntensityModel("ratio")
    h = 1e-3
    fd = (m.revenue(p, x + h) - 2 * m.revenue(p, x) + m.revenue(p, x - h if x > h else 0.0)) / h**2
    assert m.revenue_d2(p, x) <= 0
    if x > h:
        assert fd <= 1e-6


@pytest.mark.parametrize("m", FAMILIES)
@given(interior, interior, interior)
def test_rate_monotone(m, p, u1, u2):
    if abs(u1 - u2) < 1e-6:
        return
    lo, hi = sorted((u1, u2))
    assert m.rate(p, lo) > m.rate(p, hi)
    p2 = min(p + 0.005, 0.995)
    assert m.rate(p2, u1) > m.rate(p, u1)


@pytest.mark.parametrize("m", FAMILIES)
@given(interior, st.floats(0.001, 0.999))
def test_inverse_is_left_inverse(m, p, u):
    assert m.inverse_rate(p, m.rate(p, u)) == pytest.approx(u, abs=1e-10)


def test_concave_envelope_ratio_is_f():
    m = IntensityModel("ratio")
    x = np.linspace(0, 5, 200)
    env = concave_envelope(m, 0.3, x)
    np.testing.assert_allclose(env(x), m.revenue(0.3, x), atol=1e-14)


def test_concave_envelope_logratio_exceeds_f():
    m = IntensityModel("logratio")
    p = math.exp(-1)
    x = np.linspace(0.0, 8.0, 801)
    env = concave_envelope(m, p, x)
    gap = env(x) - m.revenue(p, x)
    assert np.all(gap >= -1e-14)
    assert gap[(x > 2) & (x < 7.9)].max() > 1e-3


@given(interior)
def test_envelope_majorant_concave(p):
    m = IntensityModel("logratio")
    env = concave_envelope(m, p)
    x = env.x
    assert np.all(env(x) >= m.revenue(p, x) - 1e-12)
    assert np.all(np.diff(np.diff(env.y) / np.diff(env.x)) <= 1e-12)


def test_envelope_grid_validation():
    with pytest.raises(ValidationError):
        concave_envelope(IntensityModel("ratio"), 0.5, [0.0, 1.0])
    with pytest.raises(ValidationError):
        concave_envelope(IntensityModel("ratio"), 0.5, [0.0, 2.0, 1.0])


def test_model_validation_and_dict():
    with pytest.raises(ValidationError):
        IntensityModel("exponential")
    with pytest.raises(ValidationError):
        IntensityModel("ratio", -1.0)
    with pytest.raises(ValidationError):
        IntensityModel("cubic")
    m = IntensityModel("exponential", 2.0, 5.0)
    assert IntensityModel.from_dict(m.to_dict()) == m
