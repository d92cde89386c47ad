import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from pshlab.grid import ScalarField
from pshlab.potential1d import (DiscDomain, ConvergenceError, comparison_ratio, decompose_newton, green_function,
                                green_potential, gradient_bound_measure, harnack_ratio, lipschitz_set_1d,
                                lipschitz_sets_1d, newton_gradient, reduction, _inv_r_antiderivative)

UNIT = DiscDomain(0j, 1.0, 256)


def disc(radius, center=0j):
    return lambda xs: (xs[0] - center.real) ** 2 + (xs[1] - center.imag) ** 2 <= radius**2


def annulus(a, b):
    return lambda xs: (xs[0] ** 2 + xs[1] ** 2 >= a * a) & (xs[0] ** 2 + xs[1] ** 2 <= b * b)


def random_atoms(rng, count=3, radius=0.5):
    r = radius * np.sqrt(rng.random(count))
    th = 2 * np.pi * rng.random(count)
    return [(complex(a * np.cos(t), a * np.sin(t)), float(m)) for a, t, m in zip(r, th, rng.uniform(0.2, 2.0, count))]


def test_domain_validation():
    with pytest.raises(ValueError):
        DiscDomain(0j, 0.0)
    d = DiscDomain(0.5 + 0.5j, 2.0, 64)
    assert d.spec.lower == pytest.approx((-1.5, -1.5)) and d.spec.upper == pytest.approx((2.5, 2.5))


def test_green_of_origin_is_newton():
    F = green_potential([(0j, 1.0)], UNIT)
    x, y = F.spec.coords()
    r = np.hypot(x, y)
    sel = ~F.mask & (r < 1)
    np.testing.assert_allclose(F.values[sel], np.log(1 / r[sel]) / (2 * np.pi), rtol=1e-12, atol=1e-15)
    assert F.mask.sum() == 4


def test_green_vanishes_on_boundary():
    th = np.linspace(0, 2 * np.pi, 360, endpoint=False)
    for w in (0j, 0.5, -0.3 + 0.6j):
        assert np.max(np.abs(green_function(np.exp(1j * th), w, DiscDomain()))) <= 1e-9
    d = DiscDomain(1 + 2j, 3.0)
    assert np.max(np.abs(green_function(1 + 2j + 3 * np.exp(1j * th), 2 + 2j, d))) <= 1e-9


def test_green_rejects_boundary_atoms():
    for w in (1.0, 0.8 + 0.8j):
        with pytest.raises(ValueError):
            green_potential([(w, 1.0)], UNIT)
    with pytest.raises(ValueError):
        green_potential([(0j, 0.0)], UNIT)


def test_green_sub_mean(rng):
    # superharmonic: circle averages do not exceed the center value
    atoms = [(0j, 1.0), (0.5 + 0j, 1.0)]
    f = lambda z: sum(m * green_function(z, w, UNIT) for w, m in atoms)
    checked = 0
    while checked < 100:
        z = complex(*rng.uniform(-0.9, 0.9, 2))
        rho = min(1 - abs(z), min(abs(z - w) for w, _ in atoms)) * rng.uniform(0.2, 0.9)
        if abs(z) >= 0.95 or rho <= 1e-3:
            continue
        avg = integrate.quad(lambda t: f(z + rho * np.exp(1j * t)), 0, 2 * np.pi, limit=200)[0] / (2 * np.pi)
        assert avg <= f(z) + 1e-9
        checked += 1


def test_green_positive_inside():
    F = green_potential([(0.2 + 0.1j, 1.0), (-0.4j, 0.5)], UNIT)
    inside = UNIT.inside() & ~F.mask
    assert np.all(F.values[inside] >= 0)


def test_green_symmetry(rng):
    z = 0.99 * np.sqrt(rng.random(1000)) * np.exp(2j * np.pi * rng.random(1000))
    w = 0.99 * np.sqrt(rng.random(1000)) * np.exp(2j * np.pi * rng.random(1000))
    for d in (DiscDomain(), DiscDomain(0.5 - 1j, 2.5)):
        zz, ww = d.center + d.radius * z, d.center + d.radius * w
        a = np.array([green_function(p, q, d) for p, q in zip(zz, ww)])
        b = np.array([green_function(q, p, d) for p, q in zip(zz, ww)])
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_reduction_of_potential_supported_in_omega():
    # a sampled log singularity is not discretely superharmonic, so the discrete
    # reduite lifts it by a scale-invariant amount near the atom; it never drops below
    errs = []
    for m in (128, 256):
        d = DiscDomain(0j, 1.0, m)
        F = green_potential([(0j, 1.0)], d)
        v = reduction(F, disc(0.5), d)
        diff = np.where(F.mask, 0.0, v.values - F.values)
        assert diff.min() >= -1e-8
        errs.append(diff.max())
    assert max(errs) <= 2e-3 and errs[1] <= errs[0]


def test_reduction_annulus_harmonic_measure():
    d = DiscDomain(0j, 1.0, 512)
    spec = d.spec
    x, y = spec.coords()
    r = np.hypot(x, y)
    inside = d.inside(spec)
    v = reduction(ScalarField(spec, np.where(inside, 1.0, 0.0)), disc(0.25), d)
    np.testing.assert_allclose(v.values[inside & (r <= 0.25)], 1.0, atol=1e-8)
    sel = inside & (r > 0.25)
    exact = np.log(1 / r[sel]) / np.log(4)
    assert np.max(np.abs(v.values[sel] - exact)) <= 0.02


def test_reduction_omega_is_domain():
    d = DiscDomain(0j, 1.0, 64)
    F = ScalarField(d.spec, np.where(d.inside(), 1.5, 0.0))
    v = reduction(F, lambda xs: np.ones(np.broadcast_shapes(xs[0].shape, xs[1].shape), bool), d)
    np.testing.assert_array_equal(v.values, F.values)


def test_reduction_nonconvergence_reports_residual():
    d = DiscDomain(0j, 1.0, 64)
    F = ScalarField(d.spec, np.where(d.inside(), 1.0, 0.0))
    with pytest.raises(ConvergenceError, match="residual"):
        reduction(F, disc(0.25), d, max_iter=3)


@given(st.floats(0.0, 2.0), st.floats(0.05, 0.6))
def test_reduction_monotone_in_obstacle(extra, rad):
    d = DiscDomain(0j, 1.0, 64)
    F = green_potential([(0.1 + 0.1j, 1.0)], d)
    G = ScalarField(d.spec, F.values + extra * np.where(d.inside(), 1.0, 0.0), F.mask)
    omega = disc(rad)
    a, b = reduction(F, omega, d, tol=1e-8), reduction(G, omega, d, tol=1e-8)
    assert np.all(a.values <= b.values + 2e-8)


def test_decompose_origin_is_zero():
    F = green_potential([(0j, 1.0)], UNIT)
    D = decompose_newton(F, [(0j, 1.0)], disc(0.5))
    inside = UNIT.inside() & ~D.H.mask
    assert np.max(np.abs(D.H.values[inside])) <= 1e-10
    assert D.gradient_max <= 1e-10


def test_decompose_off_center_gradient():
    atoms = [(0.3 + 0j, 1.0)]
    D = decompose_newton(green_potential(atoms, UNIT), atoms, disc(0.5))
    # closed form: |grad H| = |w| / (2 pi |1 - z conj(w)|) <= 0.3 / (2 pi 0.85)
    assert D.gradient_max <= 0.5
    assert D.gradient_max == pytest.approx(0.3 / (2 * np.pi * 0.85), rel=0.02)


def test_decompose_linear():
    atoms = [(0.3j, 1.0), (-0.2 + 0.1j, 2.0)]
    D1 = decompose_newton(green_potential(atoms, UNIT), atoms, disc(0.5))
    atoms3 = [(w, 3 * m) for w, m in atoms]
    D3 = decompose_newton(green_potential(atoms3, UNIT), atoms3, disc(0.5))
    np.testing.assert_allclose(D3.H.values, 3 * D1.H.values, rtol=1e-12, atol=1e-15)
    assert D3.ratio == pytest.approx(D1.ratio, rel=1e-12)


def test_decompose_rejects_wrong_atoms():
    F = green_potential([(0.3 + 0j, 1.0)], UNIT)
    with pytest.raises(ValueError, match="decomposition invalid"):
        decompose_newton(F, [(-0.3 + 0j, 1.0)], disc(0.5))


def test_decompose_gradient_ratio_uniform(rng):
    # atoms in |w| <= 0.3, omega' = |z| <= 0.5: the ratio stays below the edge single-atom value
    edge = decompose_newton(green_potential([(0.3 + 0j, 1.0)], UNIT), [(0.3 + 0j, 1.0)], disc(0.5)).ratio
    for _ in range(10):
        atoms = random_atoms(rng, radius=0.3)
        assert decompose_newton(green_potential(atoms, UNIT), atoms, disc(0.5)).ratio <= 3 * edge


def test_comparison_constant_field():
    spec = UNIT.spec
    f = ScalarField(spec, np.full(spec.shape, 2.0))
    lam = np.count_nonzero(annulus(0.3, 0.6)(spec.coords())) * spec.cell_volume
    assert comparison_ratio(f, annulus(0.3, 0.6), disc(0.2)) == pytest.approx((lam, lam), rel=1e-12)
    with pytest.raises(ValueError):
        comparison_ratio(ScalarField(spec, np.zeros(spec.shape)), disc(0.5), disc(0.5))


def test_comparison_stable_under_atom_move():
    ann = annulus(0.3, 0.6)
    a = comparison_ratio(green_potential([(0j, 1.0)], UNIT), ann, ann)
    b = comparison_ratio(green_potential([(0.1j, 1.0)], UNIT), ann, ann)
    assert all(np.isfinite(a + b))
    assert 1 / 3 <= b[0] / a[0] <= 3 and 1 / 3 <= b[1] / a[1] <= 3


def test_comparison_family_budget(rng):
    lows, highs = [], []
    for _ in range(10):
        lo, hi = comparison_ratio(green_potential(random_atoms(rng), UNIT), annulus(0.3, 0.6), disc(0.8))
        lows.append(lo)
        highs.append(hi)
    assert max(highs) / min(lows) <= 1e3


def test_harnack_uniform(rng):
    cs = [harnack_ratio(green_potential(random_atoms(rng), UNIT), UNIT, delta=0.2, eta=0.1) for _ in range(10)]
    assert min(cs) > 0.05 and max(cs) / min(cs) <= 3


def test_inverse_distance_cell_integrals():
    for x0, x1, y0, y1 in [(-0.3, 0.2, -0.1, 0.4), (0.1, 0.3, 0.2, 0.5), (-0.5, -0.1, -0.7, -0.2)]:
        P = _inv_r_antiderivative
        exact = P(x1, y1) - P(x0, y1) - P(x1, y0) + P(x0, y0)
        quad = integrate.dblquad(lambda y, x: 1 / math.hypot(x, y), x0, x1, y0, y1, epsabs=1e-11)[0]
        assert exact == pytest.approx(quad, rel=1e-9)


def test_gradient_bound_dominates_gradient():
    spec = DiscDomain(0j, 0.75, 128).spec
    atoms = [(0.05 + 0.02j, 1.0), (0.4 - 0.1j, 0.5)]
    mu = gradient_bound_measure(atoms, spec)
    g = newton_gradient(atoms, spec)
    far = ~g.mask
    for w, _ in atoms:
        x, y = spec.coords()
        far &= np.hypot(x - w.real, y - w.imag) > 4 * spec.h[0]
    avg = mu.weights / spec.cell_volume
    assert np.all(avg[far] >= g.values[far] * (1 - 1e-3))
    # total mass over the square matches the quadrature of the bound
    assert mu.weights.sum() == pytest.approx(
        sum(m / (2 * np.pi) * integrate.dblquad(lambda y, x: 1 / math.hypot(x - w.real, y - w.imag), -0.75, 0.75,
                                                -0.75, 0.75, epsabs=1e-10)[0] for w, m in atoms), rel=1e-6)


@pytest.fixture(scope="module")
def dirac_extraction():
    return lipschitz_sets_1d([(0j, 1.0)], [8, 16, 32, 64])


def test_extraction_law_dirac(dirac_extraction):
    ks = np.array([e.k for _, e in dirac_extraction])
    comp = np.array([e.complement for _, e in dirac_extraction])
    slope = np.polyfit(np.log(ks), np.log(comp), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.25)
    norm = [e.normalized for _, e in dirac_extraction]
    assert max(norm) / min(norm) <= 4
    # continuum value pi (2.938 / (2 pi))^2 with threshold k at C_2 = 1/2
    assert norm[0] == pytest.approx(math.pi * (2.938 / (2 * math.pi)) ** 2, rel=0.05)


def test_extraction_verify(dirac_extraction):
    for L, e in dirac_extraction:
        assert e.verify.passed and e.verify.constant <= 2 * e.k


def test_extraction_monotone_in_k(dirac_extraction):
    sets = [L for L, _ in dirac_extraction]
    for a, b in zip(sets, sets[1:]):
        assert np.all(b.member >= a.member)


def test_extraction_empty_measure_is_K():
    L, e = lipschitz_set_1d([], 8.0, count=64)
    x, y = L.spec.coords()
    np.testing.assert_array_equal(L.member, np.broadcast_to(x**2 + y**2 <= 0.75**2, L.spec.shape))
    assert e.complement == 0.0 and e.normalized == 0.0
