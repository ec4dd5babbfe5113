import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from distdisc.exceptions import EmptyGrid, SaturationWarning
from distdisc.locfit import default_u_grid
from distdisc.quantiles import (
    QuantileCurve,
    curve_integral,
    integrate,
    invert_cdf,
    monotonize,
    quadrature_weights,
    trim,
)

finite = st.floats(-3, 3, allow_nan=False)


@given(arrays(float, st.integers(2, 60), elements=finite))
def test_monotonize_is_a_monotone_cdf(values):
    out = monotonize(values)
    assert np.all(np.diff(out) >= 0)
    assert out.min() >= 0 and out.max() <= 1


def test_monotonize_keeps_monotone_input():
    cdf = np.linspace(0, 1, 11)
    assert np.array_equal(monotonize(cdf), cdf)


def test_invert_cdf_matches_generalised_inverse():
    y = np.linspace(-1, 1, 5)
    cdf = np.array([0.1, 0.3, 0.3, 0.8, 1.0])
    q = invert_cdf(cdf, np.array([0.05, 0.1, 0.2, 0.3, 0.5, 0.9]), y)
    # smallest y with F(y) >= u
    assert q.values.tolist() == [-1.0, -1.0, -0.5, -0.5, 0.5, 1.0]


def test_invert_cdf_flags_saturation():
    y = np.linspace(0, 1, 4)
    cdf = np.array([0.0, 0.2, 0.5, 0.9])
    with pytest.warns(SaturationWarning):
        q = invert_cdf(cdf, np.array([0.5, 0.95]), y)
    assert q.saturated.tolist() == [False, True]
    assert q.values[-1] == 1.0


def test_invert_cdf_rejects_non_monotone():
    with pytest.raises(ValueError):
        invert_cdf(np.array([0.1, 0.5, 0.4]), np.array([0.5]), np.arange(3.0))


@given(arrays(float, st.integers(3, 40), elements=st.floats(0, 1)))
def test_inversion_galois_property(raw):
    # F(Q(u)) >= u and Q(u) is the smallest grid point with that property
    cdf = np.sort(raw)
    cdf[-1] = 1.0
    y = np.arange(cdf.size, dtype=float)
    u = default_u_grid(99)
    q = invert_cdf(cdf, u, y, warn=False)
    idx = q.values.astype(int)
    assert np.all(cdf[idx] >= u - 1e-15)
    below = idx - 1
    ok = below >= 0
    assert np.all(cdf[below[ok]] < u[ok])


def test_trim_keeps_closed_interval():
    u = default_u_grid(999)
    q = QuantileCurve(u, u.copy())
    t = trim(q, 0.1)
    assert t.u_grid[0] == pytest.approx(0.1) and t.u_grid[-1] == pytest.approx(0.9)
    assert t.trim == 0.1
    assert trim(q, 0.0) is q or np.array_equal(trim(q, 0.0).u_grid, u)


def test_trim_rejects_too_large():
    q = QuantileCurve(default_u_grid(9), np.zeros(9))
    with pytest.raises(EmptyGrid):
        trim(q, 0.5)


def test_quadrature_weights_sum_to_range():
    u = default_u_grid(999)
    # default range is the grid's own span; explicit limits extend the end values flat
    assert quadrature_weights(u).sum() == pytest.approx(0.998, abs=1e-12)
    assert quadrature_weights(u, 0.0, 1.0).sum() == pytest.approx(1.0, abs=1e-12)
    t = trim(QuantileCurve(u, u.copy()), 0.1)
    assert curve_integral(t, np.ones(t.u_grid.size)) == pytest.approx(0.8, abs=1e-12)


def test_trapezoid_is_exact_for_linear_and_second_order_for_quadratic():
    u = default_u_grid(999)
    assert integrate(2 * u - 1, u, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    err = abs(integrate(u**2, u, 0.001, 0.999) - (0.999**3 - 0.001**3) / 3)
    assert err < 1e-6


@given(st.floats(-5, 5, allow_nan=False))
def test_curve_integral_of_constant(c):
    u = default_u_grid(199)
    q = QuantileCurve(u, np.full(u.size, c))
    assert curve_integral(q) == pytest.approx(c, abs=1e-12)
