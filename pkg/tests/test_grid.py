import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshlab.grid import (
    GridMeasure,
    GridSpec,
    ScalarField,
    fit_loglog_slope,
    gradient_magnitude,
    integrate_region,
    sample_field,
)


def radius(xs):
    return np.hypot(xs[0], xs[1])


def square(m):
    return GridSpec((0.0, 0.0), (1.0, 1.0), (m, m))


def test_spec_validation():
    with pytest.raises(ValueError):
        GridSpec((0,), (1,), (8,))
    with pytest.raises(ValueError):
        GridSpec((0, 0), (1, 1), (3, 8))
    with pytest.raises(ValueError):
        GridSpec((0, 0), (0, 1), (8, 8))
    with pytest.raises(ValueError):
        GridSpec.cube(1, 128, 4, budget=2**20)
    spec = GridSpec.cube(1, 64, 2)
    assert spec.h == (2 / 64, 2 / 64)
    assert spec.size == 4096


def test_sample_abs():
    spec = GridSpec.cube(1, 64, 2)
    f = sample_field(radius, spec)
    x, y = spec.coords()
    np.testing.assert_array_equal(f.values, np.hypot(x, y))
    assert not f.mask.any()


def test_sample_log_masks_singular_cells():
    spec = GridSpec.cube(1, 64, 2)
    f = sample_field(lambda xs: np.log(radius(xs)), spec, singular_points=[(0.0, 0.0)])
    # 0 is a cell corner: the four cells sharing it are masked
    assert f.mask.sum() == 4
    assert f.mask[31:33, 31:33].all()
    spec_odd = GridSpec.cube(1, 65, 2)
    g = sample_field(lambda xs: np.log(radius(xs)), spec_odd, singular_points=[(0.0, 0.0)])
    assert g.mask.sum() == 1 and g.values[32, 32] == -1e9


def test_sample_zero_and_nan():
    spec = GridSpec.cube(1, 8, 2)
    assert not sample_field(lambda xs: 0 * xs[0], spec).values.any()
    with pytest.raises(ValueError, match="NaN"):
        sample_field(lambda xs: np.sqrt(xs[0] + 0 * xs[1]), spec)


def test_field_invariants():
    spec = GridSpec.cube(1, 8, 2)
    with pytest.raises(ValueError):
        ScalarField(spec, np.full(spec.shape, -np.inf))
    with pytest.raises(ValueError):
        ScalarField(spec, np.zeros(10))


def test_integrate_constant_and_linear():
    assert integrate_region(ScalarField(square(16), np.ones((16, 16)))).value == 1.0
    f = sample_field(lambda xs: xs[0] + 0 * xs[1], square(128))
    assert abs(integrate_region(f).value - 0.5) <= 1e-4


def test_integrate_singular_annulus():
    spec = GridSpec.cube(1, 256, 2)
    f = sample_field(lambda xs: 1 / radius(xs), spec, singular_points=[(0, 0)])
    region = lambda xs: (radius(xs) >= 0.25) & (radius(xs) <= 0.5)
    got = integrate_region(f, region)
    assert got.skipped == 0
    assert got.value == pytest.approx(2 * math.pi * 0.25, rel=0.02)
    full = integrate_region(f)
    assert full.skipped == 4


def test_integrate_empty_region():
    f = ScalarField(square(8), np.ones((8, 8)))
    with pytest.raises(ValueError, match="empty region"):
        integrate_region(f, np.zeros((8, 8), bool))


def test_gradient_examples():
    g = gradient_magnitude(sample_field(lambda xs: 3 * xs[0] + 0 * xs[1], square(32)))
    np.testing.assert_allclose(g.values, 3, atol=1e-10)
    spec = GridSpec.cube(1, 256, 2)
    g = gradient_magnitude(sample_field(radius, spec))
    r = np.broadcast_to(radius(spec.coords()), spec.shape)
    err = np.abs(g.values - 1)
    # central-difference error ~ h^2/r^2: 1.4e-3 at r = 0.105, below 1e-3 from r = 0.13
    assert err[r > 0.13].max() < 1e-3
    assert err[r > 0.1].max() < 1.5e-3
    spec = GridSpec.cube(1, 512, 2)
    f = sample_field(lambda xs: -np.log(radius(xs)), spec, singular_points=[(0, 0)])
    g = gradient_magnitude(f)
    r = radius(spec.coords())
    sel = (r >= 0.2) & (r <= 0.8)
    assert np.abs(g.values[sel] * r[np.broadcast_to(sel, spec.shape)] - 1).max() < 0.01
    assert g.mask.sum() > f.mask.sum()
    with pytest.raises(ValueError):
        gradient_magnitude(f, axes=())


def test_partial_gradient():
    spec = GridSpec.cube(1, 16, 4)
    f = sample_field(lambda xs: 2 * xs[0] + 5 * xs[3], spec)
    np.testing.assert_allclose(gradient_magnitude(f, axes=(0, 1)).values, 2, atol=1e-12)
    np.testing.assert_allclose(gradient_magnitude(f, axes=(2, 3)).values, 5, atol=1e-12)


def test_fit_examples(rng):
    fit = fit_loglog_slope([(1, 1), (2, 4), (4, 16)])
    assert fit.slope == pytest.approx(2.0) and fit.r_squared == pytest.approx(1.0)
    assert fit_loglog_slope([(1, 2), (2, 2), (4, 2)]).slope == pytest.approx(0.0, abs=1e-14)
    x = 2.0 ** np.arange(8)
    y = x**-2 * (1 + 0.01 * rng.standard_normal(8))
    assert fit_loglog_slope(zip(x, y)).slope == pytest.approx(-2.0, abs=0.02)
    with pytest.raises(ValueError):
        fit_loglog_slope([(1, 1), (2, 2)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(1, 1), (2, 0), (3, 3)])


def test_measure_validation():
    spec = GridSpec.cube(1, 8, 2)
    with pytest.raises(ValueError):
        GridMeasure(spec, -np.ones(spec.shape))
    with pytest.raises(ValueError):
        GridMeasure(spec, None, (((2.0, 0.0), 1.0),))
    mu = GridMeasure(spec, np.ones(spec.shape), (((0.0, 0.0), 2.0),))
    assert mu.total_mass == 66.0
    assert mu.mass(lambda xs: xs[0] > 0) == 32.0


# -- invariants ---------------------------------------------------------------

@given(st.integers(0, 2**31 - 1), st.floats(-1, 1))
def test_integral_additive(seed, cut):
    rng = np.random.default_rng(seed)
    spec = GridSpec.cube(1, 32, 2)
    f = ScalarField(spec, rng.standard_normal(spec.shape))
    left = lambda xs: np.broadcast_to(xs[0] < cut, spec.shape)
    right = lambda xs: np.broadcast_to(xs[0] >= cut, spec.shape)
    parts = [integrate_region(f, r).value for r in (left, right) if r(spec.coords()).any()]
    assert sum(parts) == pytest.approx(integrate_region(f).value, abs=1e-12)


@given(st.floats(-1e3, 1e3), st.integers(0, 2**31 - 1))
def test_gradient_shift_and_constant(c, seed):
    rng = np.random.default_rng(seed)
    spec = GridSpec.cube(1, 16, 2)
    f = ScalarField(spec, rng.standard_normal(spec.shape))
    assert not gradient_magnitude(ScalarField(spec, np.full(spec.shape, c))).values.any()
    a = gradient_magnitude(f).values
    b = gradient_magnitude(f + c).values
    # equality up to the rounding of f + c itself
    np.testing.assert_allclose(a, b, rtol=0, atol=64 * np.spacing(abs(c) + 4.0) / spec.h[0])


@pytest.mark.parametrize("m", [16, 32, 64])
def test_refinement_consistency(m):
    f = lambda xs: np.exp(xs[0]) * np.cos(xs[1])
    exact = (math.e - 1) * math.sin(1)
    err = lambda k: abs(integrate_region(sample_field(f, square(k))).value - exact)
    assert err(2 * m) <= err(m)
