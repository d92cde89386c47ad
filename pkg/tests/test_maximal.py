import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pshlab.grid import GridMeasure, GridSpec, ScalarField, atoms_measure
from pshlab.maximal import (MaximalParams, RieszParams, bojarski_ratio, convolution_excess, disc_max, disc_sum,
                            hedberg_gap, hl_maximal, maximal_riesz, riesz_potential, weak_type_profile)
from pshlab.zoo import mollify, parse_model

DYADIC = [2.0**k for k in range(2, 9)]


@pytest.fixture(scope="module")
def dirac_maximal():
    spec = GridSpec.cube(0.6, 512, 2)
    return hl_maximal(atoms_measure(spec, [((0, 0), 1.0)]), MaximalParams(r_max=0.6))


def test_params_validation():
    with pytest.raises(ValueError):
        MaximalParams(mode="local")
    with pytest.raises(ValueError):
        MaximalParams(mode="local", rho=1.0, r_max=0.5)
    with pytest.raises(ValueError):
        RieszParams(alpha=2.0, N=2)
    spec = GridSpec.cube(1.0, 64, 2)
    r = MaximalParams(per_octave=4, r_max=1.0).radii(spec)
    assert r[0] == pytest.approx(spec.h[0] / 2) and r[-1] == pytest.approx(1.0)
    assert np.all(np.diff(r) > 0)


def test_disc_helpers_match_brute_force(rng):
    a = rng.random((23, 19))
    for R in (0.5, 1.0, 2.3, 5.0):
        Ri = int(R)
        pad = np.pad(a, Ri, constant_values=0.0)
        padm = np.pad(a, Ri, constant_values=-np.inf)
        s = np.zeros_like(a)
        m = np.full_like(a, -np.inf)
        for dx in range(-Ri, Ri + 1):
            for dy in range(-Ri, Ri + 1):
                if dx * dx + dy * dy <= R * R:
                    s += pad[Ri + dy:Ri + dy + 23, Ri + dx:Ri + dx + 19]
                    m = np.maximum(m, padm[Ri + dy:Ri + dy + 23, Ri + dx:Ri + dx + 19])
        np.testing.assert_allclose(disc_sum(a, R), s, atol=1e-12)
        np.testing.assert_array_equal(disc_max(a, R), m)


def test_dirac_maximal_profile(dirac_maximal):
    spec = dirac_maximal.spec
    x, y = spec.coords()
    r = np.sqrt(x**2 + y**2)
    sel = (r >= 0.1) & (r <= 0.5)
    rel = dirac_maximal.values[sel] * np.pi * r[sel] ** 2 / 4
    assert np.all(np.abs(rel - 1) <= 0.10)


def test_constant_field_exact():
    spec = GridSpec.cube(1.0, 64, 2)
    f = ScalarField(spec, np.full(spec.shape, 2.5))
    for centered in (False, True):
        M = hl_maximal(f, MaximalParams(centered=centered, per_octave=4))
        np.testing.assert_allclose(M.values, 2.5, rtol=1e-12)


def test_sublinearity_two_atoms():
    spec = GridSpec.cube(1.0, 128, 2)
    p = MaximalParams(per_octave=8, pool_radius=8)
    a = atoms_measure(spec, [((0.1, 0.2), 1.0)])
    b = atoms_measure(spec, [((-0.3, 0.05), 2.0)])
    both = hl_maximal(a + b, p).values
    assert np.all(both <= hl_maximal(a, p).values + hl_maximal(b, p).values + 1e-12)


@settings(max_examples=10)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_sublinearity_fields(s, t):
    spec = GridSpec.cube(1.0, 48, 2)
    x, y = spec.coords()
    f = ScalarField(spec, np.broadcast_to(s * np.exp(-8 * x**2) + 0 * y, spec.shape).copy())
    g = ScalarField(spec, np.broadcast_to(t * np.cos(3 * y) ** 2 + 0 * x, spec.shape).copy())
    p = MaximalParams(per_octave=4, pool_radius=4)
    assert np.all(hl_maximal(f + g, p).values <= hl_maximal(f, p).values + hl_maximal(g, p).values + 1e-9)


def test_riesz_atom_exact():
    spec = GridSpec.cube(0.5, 64, 2)
    I = riesz_potential(atoms_measure(spec, [((0, 0), 1.0)]), RieszParams(1.0))
    x, y = spec.coords()
    np.testing.assert_allclose(I.values, 1 / np.sqrt(x**2 + y**2), rtol=1e-14)


def test_riesz_two_atoms_symmetric():
    spec = GridSpec((-0.5, -1.0), (1.5, 1.0), (100, 100))
    I = riesz_potential(atoms_measure(spec, [((0, 0), 1.0), ((1, 0), 1.0)]), RieszParams(1.0))
    np.testing.assert_allclose(I.values, I.values[::-1], atol=1e-12)
    assert I.mask.sum() == 0


def test_riesz_atom_cell_masked():
    spec = GridSpec.cube(0.5, 65, 2)
    I = riesz_potential(atoms_measure(spec, [((0, 0), 1.0)]), RieszParams(1.0))
    assert I.mask[32, 32] and I.mask.sum() == 1


def test_riesz_uniform_disc_center():
    spec = GridSpec.cube(1.1, 441, 2)
    x, y = spec.coords()
    w = np.broadcast_to(x**2 + y**2 <= 1, spec.shape).astype(float)
    I = riesz_potential(GridMeasure(spec, w / w.sum()), RieszParams(1.0))
    assert I.values[220, 220] == pytest.approx(2.0, rel=0.01)


@settings(max_examples=10)
@given(st.sampled_from([0.5, 2.0, 4.0]), st.floats(0.3, 1.7))
def test_riesz_dilation_covariance(s, alpha):
    base = GridSpec.cube(1.0, 40, 2)
    scaled = GridSpec.cube(s, 40, 2)
    pts = [((0.2, -0.1), 1.0), ((-0.5, 0.3), 0.5)]
    I0 = riesz_potential(atoms_measure(base, pts), RieszParams(alpha)).values
    I1 = riesz_potential(atoms_measure(scaled, [((s * a, s * b), m) for (a, b), m in pts]), RieszParams(alpha)).values
    np.testing.assert_allclose(I1, s ** (alpha - 2) * I0, rtol=1e-10)


def test_maximal_riesz_dominates_and_scales():
    spec = GridSpec.cube(0.5, 96, 2)
    mu = atoms_measure(spec, [((0.01, -0.02), 1.0)])
    p = MaximalParams(per_octave=8, pool_radius=8)
    J = maximal_riesz(mu, RieszParams(1.0), p)
    I = riesz_potential(mu, RieszParams(1.0))
    assert np.all(J.values >= I.values - 1e-12)
    J3 = maximal_riesz(mu.scaled(3.0), RieszParams(1.0), p)
    np.testing.assert_allclose(J3.values, 3 * J.values, rtol=1e-12)


def test_weak_type_dirac_maximal():
    spec = GridSpec.cube(1.2, 512, 2)
    M = hl_maximal(atoms_measure(spec, [((0, 0), 1.0)]), MaximalParams(r_max=1.2))
    w = weak_type_profile(M, 1, DYADIC)
    assert all(w.resolved)
    assert w.sup == pytest.approx(4.0, rel=0.15)


def test_weak_type_riesz_atom():
    spec = GridSpec.cube(0.6, 2048, 2)
    I = riesz_potential(atoms_measure(spec, [((0, 0), 1.0)]), RieszParams(1.0))
    w = weak_type_profile(I, 2, DYADIC, strict=False)
    for q, ok in zip(w.products, w.resolved):
        if ok:
            assert q == pytest.approx(math.pi, rel=0.05)
    assert sum(w.resolved) >= 5


def test_weak_type_zero_and_empty():
    spec = GridSpec.cube(1.0, 32, 2)
    z = ScalarField(spec, np.zeros(spec.shape))
    assert weak_type_profile(z, 1, [1, 2]).products == (0.0, 0.0)
    with pytest.raises(ValueError):
        weak_type_profile(z, 1, [])


@pytest.fixture(scope="module")
def riesz_profiles():
    spec = GridSpec.cube(1.2, 512, 2)
    mu = atoms_measure(spec, [((0, 0), 1.0)])
    ts = [2.0**k for k in range(0, 7)]
    J = maximal_riesz(mu, RieszParams(1.0), MaximalParams(r_max=1.2))
    return weak_type_profile(J, 2, ts), ts


def test_maximal_riesz_profile_bounded(riesz_profiles):
    # the uncentered maximal of 1/|x| is c/|x| with c^2 = 8.634 (disc through 0 and x)
    w, ts = riesz_profiles
    prods = [q for q, ok in zip(w.products, w.resolved) if ok]
    assert len(prods) >= 4
    assert max(prods) / math.pi == pytest.approx(8.634, rel=0.1)


@pytest.mark.xfail(strict=True, reason="the continuum ratio is 8.63, above the stated factor 4")
def test_maximal_riesz_profile_factor_four(riesz_profiles):
    w, _ = riesz_profiles
    assert max(q for q, ok in zip(w.products, w.resolved) if ok) <= 4 * math.pi


def test_bojarski_linear_and_constant():
    spec = GridSpec.cube(1.0, 128, 2)
    x, y = spec.coords()
    lin = ScalarField(spec, np.broadcast_to(2 * x - 3 * y, spec.shape).copy())
    p = MaximalParams(mode="local", rho=0.3, per_octave=8)
    assert bojarski_ratio(lin, p).ratio == pytest.approx(0.5, abs=1e-12)
    const = ScalarField(spec, np.ones(spec.shape))
    res = bojarski_ratio(const, p)
    assert res.ratio == 0.0 and res.counterexamples == 0
    with pytest.raises(ValueError):
        bojarski_ratio(lin, MaximalParams())
    with pytest.raises(ValueError):
        bojarski_ratio(lin, p, pairs=10)


def test_bojarski_mollified_log():
    annulus = lambda xs: (xs[0] ** 2 + xs[1] ** 2 >= 0.04) & (xs[0] ** 2 + xs[1] ** 2 <= 0.64)
    model = parse_model("neg:lognorm:c=1", 1)
    ratios = []
    for m in (256, 512):
        f = mollify(model, 0.05, GridSpec.cube(1.0, m, 2))
        res = bojarski_ratio(f, MaximalParams(mode="local", rho=0.3, per_octave=16), region=annulus)
        assert res.counterexamples == 0
        ratios.append(res.ratio)
    assert ratios[-1] <= 1.0
    assert ratios[1] / ratios[0] == pytest.approx(1.0, rel=0.2)


@pytest.mark.parametrize("s,r", [(0.1, 0.1), (0.1, 0.2), (0.05, 0.4)])
def test_convolution_inequality(s, r):
    assert convolution_excess(GridSpec.cube(1.0, 512, 2), s, r) <= 1.02


def test_hedberg_split(rng):
    spec = GridSpec.cube(0.6, 256, 2)
    M = hl_maximal(atoms_measure(spec, [((0, 0), 1.0)]), MaximalParams(r_max=0.6, per_octave=16))
    gaps = []
    for _ in range(20):
        i, j = rng.integers(16, 240, size=2)
        x = np.array(spec.point((i, j)))
        if np.linalg.norm(x) == 0:
            continue
        delta = rng.uniform(0.01, 1.0)
        gaps.append(hedberg_gap(x, delta, 1.0, M.values[i, j], 1.0))
    assert max(gaps) <= 3.0
