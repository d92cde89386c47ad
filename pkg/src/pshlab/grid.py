"""Uniform grids on boxes in R^N, fields and measures sampled on them.

Complex coordinates are laid out as ``(Re z1, Im z1, Re z2, Im z2, ...)`` so
that a grid of real dimension ``N = 2n`` hosts functions of ``n`` complex
variables.  Callables handed to :func:`sample_field` receive a tuple of ``N``
broadcastable coordinate arrays (one per axis), never a dense point list, so
that 4-D and 6-D grids stay affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage

CLIP = 1e9
DEFAULT_BUDGET = 2**26

Coords = tuple[np.ndarray, ...]


@dataclass(frozen=True)
class GridSpec:
    """Box ``prod [lower_i, upper_i]`` split into ``counts_i`` equal cells per axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    counts: tuple[int, ...]
    budget: int = field(default=DEFAULT_BUDGET, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        N = len(self.counts)
        if not (len(self.lower) == len(self.upper) == N):
            raise ValueError("lower, upper and counts must have the same length")
        if N == 0 or N % 2 or N > 6:
            raise ValueError(f"dimension must be 2, 4 or 6, got {N}")
        for lo, hi, m in zip(self.lower, self.upper, self.counts):
            if not lo < hi:
                raise ValueError(f"empty axis [{lo}, {hi}]")
            if m < 4:
                raise ValueError(f"cell count {m} < 4")
        if self.size > self.budget:
            raise ValueError(f"{self.size} cells exceed the budget of {self.budget}")

    @classmethod
    def cube(cls, half_width: float, count: int, N: int, center: Sequence[float] | None = None,
             budget: int = DEFAULT_BUDGET) -> "GridSpec":
        """Cube ``[c - w, c + w]^N`` with ``count`` cells per axis."""
        c = np.zeros(N) if center is None else np.asarray(center, float)
        return cls(tuple(c - half_width), tuple(c + half_width), (count,) * N, budget)

    @property
    def N(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return len(self.counts) // 2

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / m for lo, hi, m in zip(self.lower, self.upper, self.counts))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    def axis(self, i: int) -> np.ndarray:
        """Cell-center coordinates along axis ``i``."""
        lo, h, m = self.lower[i], self.h[i], self.counts[i]
        return lo + h * (np.arange(m) + 0.5)

    def coords(self) -> Coords:
        """Open (broadcastable) cell-center coordinate arrays, one per axis."""
        return tuple(np.meshgrid(*[self.axis(i) for i in range(self.N)], indexing="ij", sparse=True))

    def point(self, index: Sequence[int]) -> tuple[float, ...]:
        return tuple(float(self.axis(i)[k]) for i, k in enumerate(index))

    def contains(self, p: Sequence[float]) -> bool:
        return all(lo <= x <= hi for lo, x, hi in zip(self.lower, p, self.upper))

    def cell_boxes_containing(self, p: Sequence[float]) -> np.ndarray:
        """Boolean mask of cells whose closed box contains ``p``."""
        parts = []
        for i in range(self.N):
            c = self.axis(i)
            parts.append(np.abs(c - p[i]) <= 0.5 * self.h[i] * (1 + 1e-12))
        return _outer_and(parts)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "counts": list(self.counts)}


def _outer_and(parts: Sequence[np.ndarray]) -> np.ndarray:
    out = parts[0]
    for p in parts[1:]:
        out = np.logical_and.outer(out, p)
    return out


def _first_bad(values: np.ndarray, spec: GridSpec) -> tuple[float, ...]:
    idx = np.unravel_index(int(np.flatnonzero(np.isnan(values))[0]), values.shape)
    return spec.point(idx)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-center samples of an extended-real function.

    Masked cells contain an analytic singularity; their values are clipped to
    ``[-1e9, 1e9]`` so that maxima and truncations stay total.
    """

    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.dtype.kind != "f":
            v = v.astype(float)
        if v.shape != self.spec.shape:
            v = v.reshape(self.spec.shape)
        m = np.zeros(v.shape, bool) if self.mask is None else np.asarray(self.mask, bool)
        if m.shape != v.shape:
            raise ValueError("mask shape differs from the grid")
        if np.isnan(v).any():
            raise ValueError(f"NaN value at {_first_bad(v, self.spec)}")
        if np.isneginf(v[~m]).any():
            raise ValueError("-inf on an unmasked cell")
        if m.any() and not np.isfinite(v[m]).all():
            v = v.copy()
            v[m] = np.clip(v[m], -CLIP, CLIP)
        v.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    def with_values(self, values: np.ndarray, mask: np.ndarray | None = None) -> "ScalarField":
        return ScalarField(self.spec, values, self.mask if mask is None else mask)

    def __add__(self, other: "float | ScalarField") -> "ScalarField":
        if isinstance(other, ScalarField):
            if other.spec != self.spec:
                raise ValueError("fields live on different grids")
            return self.with_values(self.values + other.values, self.mask | other.mask)
        return self.with_values(self.values + other)

    def __mul__(self, t: float) -> "ScalarField":
        return self.with_values(self.values * t)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Nonnegative cell masses plus point atoms ``((x_1, ..., x_N), mass)``."""

    spec: GridSpec
    weights: np.ndarray | None = None
    atoms: tuple[tuple[tuple[float, ...], float], ...] = ()
    notes: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = np.zeros(self.spec.shape) if self.weights is None else np.asarray(self.weights, float)
        w = w.reshape(self.spec.shape)
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("cell weights must be finite and nonnegative")
        atoms = tuple((tuple(float(x) for x in p), float(m)) for p, m in self.atoms)
        for p, m in atoms:
            if not m > 0 or not math.isfinite(m):
                raise ValueError(f"atom mass {m} must be positive and finite")
            if len(p) != self.spec.N or not self.spec.contains(p):
                raise ValueError(f"atom {p} outside the box")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "atoms", atoms)

    @property
    def total_mass(self) -> float:
        return stable_sum(self.weights) + math.fsum(m for _, m in self.atoms)

    def scaled(self, t: float) -> "GridMeasure":
        return GridMeasure(self.spec, self.weights * t, tuple((p, m * t) for p, m in self.atoms))

    def __add__(self, other: "GridMeasure") -> "GridMeasure":
        if other.spec != self.spec:
            raise ValueError("measures live on different grids")
        return GridMeasure(self.spec, self.weights + other.weights, self.atoms + other.atoms)

    def mass(self, region: "Region" = None) -> float:
        """Mass of cells (by center) and atoms lying in ``region``."""
        sel = region_mask(self.spec, region)
        total = stable_sum(np.where(sel, self.weights, 0.0))
        pts = [p for p, _ in self.atoms]
        if pts:
            inside = _region_at_points(self.spec, region, pts)
            total += math.fsum(m for (_, m), ok in zip(self.atoms, inside) if ok)
        return total


def lebesgue(spec: GridSpec, region: "Region" = None) -> GridMeasure:
    """Lebesgue measure restricted to ``region`` (by cell centers)."""
    return GridMeasure(spec, region_mask(spec, region) * spec.cell_volume)


def atoms_measure(spec: GridSpec, atoms: Iterable[tuple[Sequence[float], float]]) -> GridMeasure:
    return GridMeasure(spec, None, tuple((tuple(p), m) for p, m in atoms))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    count: int


@dataclass(frozen=True)
class Integral:
    value: float
    skipped: int


Region = "np.ndarray | Callable[[Coords], np.ndarray] | None"


def region_mask(spec: GridSpec, region) -> np.ndarray:
    """Boolean cell selection from ``None`` (everything), a mask or a predicate on coordinates."""
    if region is None:
        return np.ones(spec.shape, bool)
    if callable(region):
        return np.broadcast_to(np.asarray(region(spec.coords()), bool), spec.shape)
    sel = np.asarray(region, bool)
    if sel.shape != spec.shape:
        raise ValueError("region mask shape differs from the grid")
    return sel


def _region_at_points(spec: GridSpec, region, pts) -> list[bool]:
    if region is None:
        return [True] * len(pts)
    if callable(region):
        arr = np.asarray(pts, float)
        return [bool(v) for v in np.asarray(region(tuple(arr[:, i] for i in range(spec.N))), bool)]
    out = []
    for p in pts:
        idx = tuple(min(int((x - lo) / h), m - 1) for x, lo, h, m in zip(p, spec.lower, spec.h, spec.counts))
        out.append(bool(region[idx]))
    return out


def stable_sum(a: np.ndarray) -> float:
    """Deterministic compensated sum: exact ``fsum`` over row-wise pairwise partial sums."""
    a = np.asarray(a, float)
    if a.ndim <= 1:
        return math.fsum(a.tolist())
    return math.fsum(a.reshape(-1, a.shape[-1]).sum(axis=1).tolist())


def sample_field(f: Callable[[Coords], np.ndarray], spec: GridSpec,
                 singular_points: Sequence[Sequence[float]] = (),
                 mask: np.ndarray | None = None) -> ScalarField:
    """Evaluate ``f`` at cell centers; mask cells whose box holds a singular point."""
    m = np.zeros(spec.shape, bool) if mask is None else np.array(mask, bool)
    for p in singular_points:
        m |= spec.cell_boxes_containing(p)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = np.array(np.broadcast_to(f(spec.coords()), spec.shape), dtype=float)
    if np.isnan(v).any():
        raise ValueError(f"evaluation returned NaN at {_first_bad(v, spec)}")
    return ScalarField(spec, v, m)


def integrate_region(fld: ScalarField, region=None, skip_masked: bool = True) -> Integral:
    """Midpoint rule ``sum value * cellVolume`` over the selected cells."""
    sel = region_mask(fld.spec, region)
    if not sel.any():
        raise ValueError("empty region")
    skipped = 0
    if skip_masked:
        skipped = int(np.count_nonzero(sel & fld.mask))
        sel = sel & ~fld.mask
    total = stable_sum(np.where(sel, fld.values, 0.0)) * fld.spec.cell_volume
    return Integral(total, skipped)


def derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second-order first derivative: central inside, one-sided at the two ends.

    Every stencil is written in differences so a constant has derivative 0
    exactly.
    """
    v = np.moveaxis(np.asarray(values, float), axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (4 * (v[1] - v[0]) - (v[2] - v[0])) / (2 * h)
    out[-1] = -(4 * (v[-2] - v[-1]) - (v[-3] - v[-1])) / (2 * h)
    return np.moveaxis(out, 0, axis)


def gradient_components(fld: ScalarField, axes: Sequence[int]) -> list[np.ndarray]:
    return [derivative(fld.values, fld.spec.h[a], a) for a in axes]


def gradient_magnitude(fld: ScalarField, axes: Sequence[int] | None = None) -> ScalarField:
    """Euclidean norm of the selected partial derivatives.

    Cells adjacent (along a selected axis) to a masked cell become masked and
    hold 0.
    """
    axes = tuple(range(fld.spec.N)) if axes is None else tuple(axes)
    if not axes:
        raise ValueError("empty axis subset")
    sq = np.zeros(fld.spec.shape)
    for g in gradient_components(fld, axes):
        sq += g * g
    mask = fld.mask
    if mask.any():
        st = np.zeros((3,) * fld.spec.N, bool)
        centre = (1,) * fld.spec.N
        st[centre] = True
        for a in axes:
            for d in (0, 2):
                idx = list(centre)
                idx[a] = d
                st[tuple(idx)] = True
        mask = ndimage.binary_dilation(mask, st)
    with np.errstate(invalid="ignore", over="ignore"):
        val = np.sqrt(sq)
    val[mask] = 0.0
    return ScalarField(fld.spec, val, mask)


def fit_line(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    """Least-squares line ``y = slope * x + intercept``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 3 or x.size != y.size:
        raise ValueError("need at least 3 points")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite data")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise ValueError("degenerate abscissae")
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(((y - ym) ** 2).sum())
    ss_res = float(((y - slope * x - intercept) ** 2).sum())
    r2 = 1.0 if ss_tot <= 1e-300 or ss_res <= 1e-28 * ss_tot else min(1.0, max(0.0, 1 - ss_res / ss_tot))
    return SlopeFit(slope, intercept, r2, int(x.size))


def fit_loglog_slope(points: Iterable[tuple[float, float]]) -> SlopeFit:
    """Least-squares fit of ``log y`` against ``log x``."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(not (a > 0 and b > 0) for a, b in pts):
        raise ValueError("log-log fit needs positive coordinates")
    return fit_line([math.log(a) for a, _ in pts], [math.log(b) for _, b in pts])
