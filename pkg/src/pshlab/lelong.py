"""Lelong numbers from sphere suprema and Kiselman-type sublevel decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import GridMeasure, GridSpec, ScalarField, fit_line, region_mask
from .zoo import ModelFunction, evaluate_array, evaluate_coords, known_properties

DEFAULT_RADII = tuple(2.0 ** -k for k in range(4, 21))


@dataclass(frozen=True)
class LelongEstimate:
    center: tuple[complex, ...]
    radii: tuple[float, ...]
    sups: tuple[float, ...]
    value: float
    r_squared: float


@dataclass(frozen=True)
class DecayFit:
    thresholds: tuple[float, ...]
    masses: tuple[float, ...]
    gamma: float | None
    gamma_ref: float | None
    verdict: str
    r_squared: float | None = None
    boxes: tuple[float, ...] = field(default=(), compare=False)


def sphere_directions(n: int, count: int | None = None) -> np.ndarray:
    """Unit vectors of C^n used for sphere suprema (``720 n`` by default).

    For ``n = 1`` these are 720 equally spaced phases.  For ``n >= 2`` they
    combine a latitude grid on the moduli (including every coordinate axis)
    with equally spaced phases, so suprema attained on a coordinate axis or
    on the torus ``|z_1| = ... = |z_n|`` are sampled exactly.
    """
    count = 720 * n if count is None else count
    if n == 1:
        t = 2 * np.pi * np.arange(count) / count
        return np.exp(1j * t)[:, None]
    rng = np.random.default_rng(42)
    moduli = [np.eye(n), np.full((1, n), 1 / math.sqrt(n))]
    per = count // 12
    rest = per - n - 1
    if rest > 0:
        m = np.abs(rng.standard_normal((rest, n)))
        moduli.append(m / np.linalg.norm(m, axis=1, keepdims=True))
    mod = np.concatenate(moduli)[:per]
    phases = 2 * np.pi * np.arange(12) / 12
    dirs = []
    for k, ph in enumerate(phases):
        rot = np.exp(1j * (ph + 2 * np.pi * np.arange(n) * k / (12 * n)))
        dirs.append(mod * rot[None, :])
    return np.concatenate(dirs)


def _sampler(phi, n: int) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(phi, ModelFunction):
        return lambda z: evaluate_array(phi, z)
    spec = phi.spec
    interp = RegularGridInterpolator([spec.axis(i) for i in range(spec.N)], np.asarray(phi.values),
                                     bounds_error=True)

    def f(z: np.ndarray) -> np.ndarray:
        pts = np.stack(sum(([z[..., j].real, z[..., j].imag] for j in range(n)), []), axis=-1)
        return interp(pts)
    return f


def estimate_lelong(phi: ModelFunction | ScalarField, a: Sequence[complex] | None = None,
                    radii: Sequence[float] | None = None) -> LelongEstimate:
    """Slope of ``r -> sup_{|z-a|=r} phi`` against ``log r`` over the smallest half of the radii."""
    n = phi.n if isinstance(phi, ModelFunction) else phi.spec.n
    a = np.zeros(n, complex) if a is None else np.asarray(a, complex)
    if radii is None:
        if not isinstance(phi, ModelFunction):
            raise ValueError("fields need an explicit radius schedule")
        radii = DEFAULT_RADII
    radii = tuple(float(r) for r in radii)
    if any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])) or len(radii) < 3:
        raise ValueError("radii must be strictly decreasing, at least 3")
    f = _sampler(phi, n)
    dirs = sphere_directions(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        sups = tuple(float(np.max(f(a[None, :] + r * dirs))) for r in radii)
    if all(s == -math.inf or s <= -1e9 for s in sups):
        raise ValueError("function -inf near center")
    half = max(3, (len(radii) + 1) // 2)
    xs = [math.log(r) for r in radii[-half:]]
    ys = list(sups[-half:])
    fit = fit_line(xs, ys)
    return LelongEstimate(tuple(complex(x) for x in a), radii, sups, fit.slope, fit.r_squared)


def _sub_box(base: GridSpec, center: Sequence[float], half: float) -> GridSpec:
    return GridSpec(tuple(c - half for c in center), tuple(c + half for c in center), base.counts, base.budget)


def _model_center(phi: ModelFunction) -> list[float]:
    ctr = phi.center if phi.center else (0j,) * phi.n
    out = []
    for c in ctr:
        out += [complex(c).real, complex(c).imag]
    return out


def sublevel_decay(phi: ModelFunction | ScalarField, K=None, mu=None,
                   thresholds: Sequence[float] = (1, 2, 3, 4, 5, 6), spec: GridSpec | None = None,
                   nu: float | None = None, reference: float | None = None,
                   tolerance: float = 0.05) -> DecayFit:
    """Masses ``mu(K & {phi <= -M})`` and the fitted exponential rate.

    ``mu`` is ``None`` (Lebesgue), a :class:`GridMeasure` on the grid of a
    field, or an object with ``measure_on(spec)`` (a Monge-Ampere context).
    For a model ``phi`` the cube ``spec`` (centred at the singularity) is
    repeatedly halved while ``phi > -M`` on the outer cell layer, so each
    sublevel set is counted at comparable resolution.
    """
    Ms = tuple(float(m) for m in thresholds)
    if any(b <= a for a, b in zip(Ms, Ms[1:])):
        raise ValueError("thresholds must increase")
    masses, boxes = [], []
    if isinstance(phi, ModelFunction):
        if spec is None:
            raise ValueError("a model needs a base grid")
        ctr = _model_center(phi)
        half0 = 0.5 * min(u - l for l, u in zip(spec.lower, spec.upper))
        for M in Ms:
            box, vals = _zoom(phi, spec, ctr, half0, M)
            boxes.append(box.upper[0] - box.lower[0])
            masses.append(_mass(box, vals, K, mu, M))
    else:
        vals = np.asarray(phi.values)
        for M in Ms:
            masses.append(_mass(phi.spec, vals, K, mu, M))
    if reference is None:
        if nu is None and isinstance(phi, ModelFunction):
            nu = known_properties(phi).lelong
        if nu:
            if mu is None or isinstance(mu, GridMeasure):
                reference = 2.0 / nu
            elif hasattr(mu, "alpha"):
                from .monge_ampere import skoda_threshold
                reference = skoda_threshold(mu.alpha, mu.n) / nu
    pos = [(M, m) for M, m in zip(Ms, masses) if m > 0]
    if len(pos) < 3:
        return DecayFit(Ms, tuple(masses), None, reference, "insufficient resolution", None, tuple(boxes))
    fit = fit_line([p[0] for p in pos], [math.log(p[1]) for p in pos])
    gamma = -fit.slope
    verdict = "inconclusive" if reference is None else (
        "pass" if gamma >= reference * (1 - tolerance) else "fail")
    return DecayFit(Ms, tuple(masses), gamma, reference, verdict, fit.r_squared, tuple(boxes))


def _zoom(phi: ModelFunction, base: GridSpec, ctr, half0: float, M: float):
    box = _sub_box(base, ctr, half0)
    vals = evaluate_coords(phi, box.coords())
    while True:
        cand = _sub_box(base, ctr, 0.5 * (box.upper[0] - box.lower[0]) / 2)
        cvals = evaluate_coords(phi, cand.coords())
        if _outer_layer_min(cvals) <= -M:
            return box, vals
        box, vals = cand, cvals
        if box.upper[0] - box.lower[0] < 1e-12:
            return box, vals


def _outer_layer_min(vals: np.ndarray) -> float:
    out = math.inf
    for ax in range(vals.ndim):
        for k in (0, -1):
            out = min(out, float(np.take(vals, k, axis=ax).min()))
    return out


def _mass(spec: GridSpec, vals: np.ndarray, K, mu, M: float) -> float:
    sel = region_mask(spec, K) & (np.broadcast_to(vals, spec.shape) <= -M)
    if mu is None:
        return float(np.count_nonzero(sel)) * spec.cell_volume
    if isinstance(mu, GridMeasure):
        if mu.spec != spec:
            raise ValueError("measure and field live on different grids")
        return mu.mass(sel)
    return mu.measure_on(spec).mass(sel)
