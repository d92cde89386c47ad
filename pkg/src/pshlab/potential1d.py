"""Potential theory on discs in C: Green potentials, reduite, Newton decomposition, 1-D extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .calibration import load_bojarski
from .grid import GridMeasure, GridSpec, ScalarField, gradient_magnitude, region_mask, stable_sum
from .lipschitz import DiscreteSet, VerifyResult, verify_extraction
from .maximal import MaximalParams, hl_maximal
from .zoo import green_kernel

Atoms = Sequence[tuple[complex, float]]


@dataclass(frozen=True)
class DiscDomain:
    """The disc ``D(center, radius)`` and a grid on its bounding box."""

    center: complex = 0j
    radius: float = 1.0
    count: int = 256

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def spec(self) -> GridSpec:
        c = complex(self.center)
        return GridSpec.cube(self.radius, self.count, 2, center=(c.real, c.imag))

    def inside(self, spec: GridSpec | None = None) -> np.ndarray:
        spec = spec or self.spec
        x, y = spec.coords()
        c = complex(self.center)
        return np.broadcast_to((x - c.real) ** 2 + (y - c.imag) ** 2 < self.radius**2, spec.shape)


def newton_kernel(z: np.ndarray) -> np.ndarray:
    """``N(z) = (1/2pi) log(1/|z|)``."""
    with np.errstate(divide="ignore"):
        return -np.log(np.abs(z)) / (2 * np.pi)


def green_function(z: np.ndarray, w: complex, domain: DiscDomain) -> np.ndarray:
    c = complex(domain.center)
    return green_kernel(np.asarray(z) - c, complex(w) - c, domain.radius)


def normalize_atoms(atoms) -> list[tuple[complex, float]]:
    """Atoms as ``(complex position, mass)`` from complex or ``(x, y)`` positions."""
    out = []
    for p, m in atoms:
        w = complex(p) if not isinstance(p, (tuple, list)) else complex(p[0], p[1])
        if not m > 0:
            raise ValueError("atom masses must be positive")
        out.append((w, float(m)))
    return out


def _cell_z(spec: GridSpec) -> np.ndarray:
    x, y = spec.coords()
    return x + 1j * y


def _atom_cells(spec: GridSpec, atoms) -> np.ndarray:
    mask = np.zeros(spec.shape, bool)
    for w, _ in atoms:
        if spec.contains((w.real, w.imag)):
            mask |= spec.cell_boxes_containing((w.real, w.imag))
    return mask


def green_potential(atoms, domain: DiscDomain, spec: GridSpec | None = None) -> ScalarField:
    """``F = sum m_i G(., w_i)``; zero outside the disc, atom cells masked."""
    atoms = normalize_atoms(atoms)
    spec = spec or domain.spec
    for w, _ in atoms:
        if abs(w - complex(domain.center)) >= domain.radius:
            raise ValueError(f"atom {w} is not strictly inside the disc")
    z = _cell_z(spec)
    vals = np.zeros(spec.shape)
    for w, m in atoms:
        vals = vals + m * green_function(z, w, domain)
    mask = _atom_cells(spec, atoms) | ~np.isfinite(vals)
    return ScalarField(spec, np.where(mask, 0.0, vals), mask)


def newton_potential(atoms, spec: GridSpec) -> ScalarField:
    """``s = N * mu``; atom cells masked."""
    atoms = normalize_atoms(atoms)
    z = _cell_z(spec)
    vals = np.zeros(spec.shape)
    for w, m in atoms:
        vals = vals + m * newton_kernel(z - w)
    mask = _atom_cells(spec, atoms) | ~np.isfinite(vals)
    return ScalarField(spec, np.where(mask, 0.0, vals), mask)


# -- reduite -------------------------------------------------------------------------

class ConvergenceError(RuntimeError):
    pass


def _neighbour_mean(v: np.ndarray) -> np.ndarray:
    p = np.pad(v, 1)
    return 0.25 * (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:])


def _fixpoint_residual(v, obstacle, active, free):
    target = np.where(active, np.maximum(obstacle, _neighbour_mean(v)), _neighbour_mean(v))
    return float(np.max(np.abs(np.where(free, target - v, 0.0)), initial=0.0))


def _psor(v, obstacle, active, free, tol, max_iter, omega):
    """Red-black projected SOR for ``v = max(1_w F, mean of 4 neighbours)``."""
    m0, m1 = v.shape
    ii, jj = np.indices(v.shape)
    colours = [free & ((ii + jj) % 2 == c) for c in (0, 1)]
    for it in range(1, max_iter + 1):
        for col in colours:
            avg = _neighbour_mean(v)
            new = v + omega * (avg - v)
            new = np.where(active, np.maximum(new, obstacle), new)
            v = np.where(col, new, v)
        if it % 20 == 0 and _fixpoint_residual(v, obstacle, active, free) < tol:
            return v, it
    res = _fixpoint_residual(v, obstacle, active, free)
    if res < tol:
        return v, max_iter
    raise ConvergenceError(f"reduite did not converge: residual {res:.3e} after {max_iter} sweeps")


def reduction(F: ScalarField, omega, domain: DiscDomain, max_iter: int = 1_000_000,
              tol: float = 1e-8) -> ScalarField:
    """Discrete reduite of ``F`` on ``omega``: the least fixpoint of ``v = max(1_omega F, mean of neighbours)``.

    ``v = 0`` outside the disc.  Solved by red-black projected SOR from a
    coarse-grid start; the stopping test is the fixpoint residual (the change
    one synchronous Jacobi sweep would make) below ``tol``.  Masked cells of
    ``F`` keep their mask and drop out of the averages of their neighbours
    only through the obstacle, which is active there when they lie in ``omega``.
    """
    spec = F.spec
    inside = domain.inside(spec)
    act = region_mask(spec, omega) & inside
    obstacle = np.where(F.mask, 0.0, np.asarray(F.values))
    fixed_mask = F.mask & act
    # masked cells inside omega take the largest neighbouring obstacle value
    if fixed_mask.any():
        obstacle = np.where(fixed_mask, ndimage.maximum_filter(np.where(F.mask, -np.inf, obstacle), size=3),
                            obstacle)
        obstacle = np.where(np.isfinite(obstacle), obstacle, 0.0)
    free = inside.copy()
    m = spec.counts[0]
    omega_relax = 2.0 / (1.0 + math.sin(math.pi / m))
    v0 = _coarse_start(obstacle, act, free, tol)
    v, _ = _psor(np.where(free, np.maximum(v0, np.where(act, obstacle, 0.0)), 0.0), obstacle, act, free,
                 tol, max_iter, omega_relax)
    return ScalarField(spec, v, F.mask)


def _coarse_start(obstacle, act, free, tol) -> np.ndarray:
    m0, m1 = obstacle.shape
    if m0 < 64 or m0 % 2 or m1 % 2:
        return np.where(act, obstacle, 0.0)
    ob = obstacle.reshape(m0 // 2, 2, m1 // 2, 2)
    ac = act.reshape(m0 // 2, 2, m1 // 2, 2)
    fr = free.reshape(m0 // 2, 2, m1 // 2, 2).all(axis=(1, 3))
    c_ob = np.where(ac, ob, -np.inf).max(axis=(1, 3))
    c_act = ac.any(axis=(1, 3))
    c_ob = np.where(c_act, c_ob, 0.0)
    c_v0 = _coarse_start(c_ob, c_act, fr, tol)
    om = 2.0 / (1.0 + math.sin(math.pi / (m0 // 2)))
    try:
        cv, _ = _psor(np.where(fr, np.maximum(c_v0, np.where(c_act, c_ob, 0.0)), 0.0), c_ob, c_act, fr,
                      max(tol, 1e-6), 20 * m0, om)
    except ConvergenceError:
        return np.where(act, obstacle, 0.0)
    return np.repeat(np.repeat(cv, 2, axis=0), 2, axis=1)


# -- Newton decomposition --------------------------------------------------------------

@dataclass(frozen=True)
class NewtonDecomposition:
    H: ScalarField
    laplacian_max: float
    gradient_max: float
    ratio: float


def _laplacian(v: np.ndarray, h: float) -> np.ndarray:
    out = np.full(v.shape, np.nan)
    out[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4 * v[1:-1, 1:-1]) / (h * h)
    return out


def decompose_newton(F: ScalarField, atoms, omega_prime, tol: float = 1e-3) -> NewtonDecomposition:
    """``H = F - N * mu`` with a harmonicity check on ``omega_prime`` and ``max |grad H|``."""
    atoms = normalize_atoms(atoms)
    mass = math.fsum(m for _, m in atoms)
    s = newton_potential(atoms, F.spec)
    mask = F.mask | s.mask
    H = ScalarField(F.spec, np.where(mask, 0.0, F.values - s.values), mask)
    sel = region_mask(F.spec, omega_prime)
    grown = ndimage.binary_dilation(mask)
    lap = _laplacian(np.asarray(H.values), F.spec.h[0])
    ok = sel & ~grown & np.isfinite(lap)
    lap_max = float(np.max(np.abs(lap[ok]), initial=0.0))
    if lap_max > tol * max(mass, 1e-300):
        raise ValueError(f"decomposition invalid: |Laplacian H| reaches {lap_max:.3e}")
    g = gradient_magnitude(H)
    gsel = sel & ~g.mask
    gmax = float(np.max(g.values[gsel], initial=0.0))
    return NewtonDecomposition(H, lap_max, gmax, gmax / mass if mass else 0.0)


# -- comparison and Harnack inequalities -----------------------------------------------

def comparison_ratio(f: ScalarField, omega, omega_prime) -> tuple[float, float]:
    """``(int_w f^2 / inf_w' f^2, sup_{z in w'} int_w f^2 / f(z)^2)``."""
    spec = f.spec
    ok = ~f.mask
    sw = region_mask(spec, omega) & ok
    sp = region_mask(spec, omega_prime) & ok
    v = np.asarray(f.values)
    integral = stable_sum(np.where(sw, v * v, 0.0)) * spec.cell_volume
    lo = float(np.min(np.abs(v[sp])))
    if lo == 0:
        raise ValueError("f vanishes on omega'")
    return integral / lo**2, float(np.max(integral / v[sp] ** 2))


def harnack_ratio(f: ScalarField, domain: DiscDomain, delta: float = 0.2, eta: float = 0.1,
                  pairs: int = 2000, seed: int = 42) -> float:
    """``min f(z) / inf_{|xi - z'| <= eta} f(xi)`` over seeded pairs in ``{|z - c| < R - delta}``."""
    spec = f.spec
    h = spec.h[0]
    R = int(math.floor(eta / h + 1e-9))
    o = np.arange(-R, R + 1)
    foot = o[:, None] ** 2 + o[None, :] ** 2 <= (eta / h) ** 2 + 1e-9
    v = np.where(f.mask, np.inf, np.asarray(f.values))
    low = ndimage.minimum_filter(v, footprint=foot, mode="constant", cval=np.inf)
    x, y = spec.coords()
    c = complex(domain.center)
    inner = np.broadcast_to((x - c.real) ** 2 + (y - c.imag) ** 2 < (domain.radius - delta) ** 2, spec.shape)
    cells = np.argwhere(inner & ~f.mask)
    rng = np.random.default_rng(seed)
    a = cells[rng.integers(len(cells), size=pairs)]
    b = cells[rng.integers(len(cells), size=pairs)]
    return float(np.min(v[a[:, 0], a[:, 1]] / low[b[:, 0], b[:, 1]]))


# -- 1-D extraction ---------------------------------------------------------------------

@dataclass(frozen=True)
class Extraction1D:
    k: float
    threshold: float
    complement: float
    normalized: float
    verify: VerifyResult | None


def newton_gradient(atoms, spec: GridSpec) -> ScalarField:
    """``|grad (N * mu)|`` at cell centers, assembled from the atoms; atom cells masked."""
    atoms = normalize_atoms(atoms)
    z = _cell_z(spec)
    g = np.zeros(spec.shape, complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        for w, m in atoms:
            d = z - w
            g = g + m * d / (2 * np.pi * np.abs(d) ** 2)
    val = np.abs(g)
    mask = _atom_cells(spec, atoms) | ~np.isfinite(val)
    return ScalarField(spec, np.where(mask, 0.0, val), mask)


def _inv_r_antiderivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``P`` with ``d^2 P / dx dy = 1 / sqrt(x^2 + y^2)``: ``x asinh(y/|x|) + y asinh(x/|y|)``."""
    ax, ay = np.abs(x), np.abs(y)
    a = np.where(ax > 0, x * np.arcsinh(y / np.where(ax > 0, ax, 1.0)), 0.0)
    b = np.where(ay > 0, y * np.arcsinh(x / np.where(ay > 0, ay, 1.0)), 0.0)
    return a + b


def gradient_bound_measure(atoms, spec: GridSpec) -> GridMeasure:
    """Exact cell integrals of ``sum m_i / (2 pi |z - w_i|)``, which dominates ``|grad (N * mu)|``."""
    atoms = normalize_atoms(atoms)
    ex = [spec.lower[i] + spec.h[i] * np.arange(spec.counts[i] + 1) for i in range(2)]
    w = np.zeros(spec.shape)
    for p, m in atoms:
        X = (ex[0] - p.real)[:, None]
        Y = (ex[1] - p.imag)[None, :]
        P = _inv_r_antiderivative(X, Y)
        w += m / (2 * np.pi) * (P[1:, 1:] - P[:-1, 1:] - P[1:, :-1] + P[:-1, :-1])
    return GridMeasure(spec, np.maximum(w, 0.0))


def lipschitz_sets_1d(atoms, ks: Sequence[float], domain: DiscDomain = DiscDomain(), K_radius: float = 0.75,
                      count: int = 1024, c2: float | None = None, verify: bool = True,
                      ) -> list[tuple[DiscreteSet, Extraction1D]]:
    """``L = K & {M g <= k / (2 C_2)}`` for each ``k``, with ``g = sum m_i / (2 pi |z - w_i|) >= |grad (N * mu)|``.

    ``g`` enters through its exact cell integrals.  ``K`` is the closed disc ``D(center, K_radius)`` and the grid covers its
    bounding box.  Balls of radius ``r`` carry averages at most
    ``||mu|| / (pi r)``, so the maximal search stops at the radius where this
    drops below the smallest threshold, which leaves every threshold test exact.
    """
    atoms = normalize_atoms(atoms)
    c = complex(domain.center)
    spec = GridSpec.cube(K_radius, count, 2, center=(c.real, c.imag))
    c2 = load_bojarski(2) if c2 is None else c2
    mass = math.fsum(m for _, m in atoms)
    x, y = spec.coords()
    K = np.broadcast_to((x - c.real) ** 2 + (y - c.imag) ** 2 <= K_radius**2, spec.shape)
    Kset = DiscreteSet(spec, K)
    thresholds = [k / (2 * c2) for k in ks]
    if mass > 0:
        bound = gradient_bound_measure(atoms, spec)
        r_max = min(mass / (math.pi * min(thresholds)), 2 * K_radius * math.sqrt(2))
        M = hl_maximal(bound, MaximalParams(r_max=max(r_max, spec.h[0])))
        F = green_potential(atoms, domain, spec)
    out = []
    for k, t in zip(ks, thresholds):
        if mass == 0:
            L = Kset
        else:
            L = DiscreteSet(spec, K & ~M.mask & ~F.mask & (M.values <= t))
        comp = L.complement_in(Kset)
        res = None
        if verify and mass > 0 and L.count:
            res = verify_extraction(F, L, k, bound=2 * k)
        out.append((L, Extraction1D(k, t, comp, comp * k * k / mass**2 if mass else 0.0, res)))
    return out


def lipschitz_set_1d(atoms, k: float, **kw) -> tuple[DiscreteSet, Extraction1D]:
    return lipschitz_sets_1d(atoms, [k], **kw)[0]
