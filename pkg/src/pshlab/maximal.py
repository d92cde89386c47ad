"""Maximal functions, Riesz potentials and weak-type profiles on planar grids.

Ball averages use discrete balls: the cells whose centers lie within ``r`` of
the ball center, with volume = cell count x cell area, so constant fields are
reproduced exactly.  Balls are truncated by the box (renormalized volume).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import ndimage, signal

from .grid import GridMeasure, GridSpec, ScalarField, gradient_magnitude, region_mask


@dataclass(frozen=True)
class MaximalParams:
    """Radius schedule and search options.

    Radii are ``r_min 2^(j / per_octave)`` up to ``r_max`` (``r_min`` defaults
    to ``h / 2``, the single-cell ball).  ``mode="local"`` caps radii below
    ``rho``.  ``centered=True`` restricts to balls centred at the cell, as in
    the truncated maximal function ``M^rho`` and the slice maximal functions.
    Large radii are evaluated on grids pooled by a power of two once the
    radius exceeds ``pool_radius`` cells; ``stride`` is the minimal pooling.
    """

    mode: str = "global"
    rho: float | None = None
    r_min: float | None = None
    r_max: float | None = None
    per_octave: int = 32
    stride: int = 1
    pool_radius: int = 32
    centered: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("global", "local"):
            raise ValueError("mode must be global or local")
        if self.mode == "local":
            if not (self.rho and self.rho > 0):
                raise ValueError("local mode needs rho > 0")
            if self.r_max is not None and self.rho > self.r_max:
                raise ValueError("local mode requires rho <= r_max")
        if self.per_octave < 1 or self.stride < 1 or self.pool_radius < 2:
            raise ValueError("per_octave, stride must be >= 1 and pool_radius >= 2")

    def radii(self, spec: GridSpec) -> np.ndarray:
        h = min(spec.h)
        r_min = self.r_min if self.r_min is not None else h / 2
        if self.mode == "local":
            top = self.rho * (1 - 1e-12)
        else:
            top = self.r_max if self.r_max is not None else math.hypot(
                spec.upper[0] - spec.lower[0], spec.upper[1] - spec.lower[1])
        if not 0 < r_min <= top:
            raise ValueError("empty radius set")
        count = int(math.floor(self.per_octave * math.log2(top / r_min) + 1e-9)) + 1
        r = r_min * 2.0 ** (np.arange(count) / self.per_octave)
        if r[-1] < top * (1 - 1e-9):
            r = np.append(r, top)
        return r


@dataclass(frozen=True)
class RieszParams:
    alpha: float = 1.0
    N: int = 2

    def __post_init__(self) -> None:
        if not 0 < self.alpha < self.N:
            raise ValueError("need 0 < alpha < N")


# -- disc sums and disc maxima by chords -----------------------------------------

def _chords(R: float) -> list[tuple[int, int]]:
    """``(dy, w)``: the integer offsets with ``dx^2 + dy^2 <= R^2`` are ``|dx| <= w``."""
    Ri = int(math.floor(R + 1e-9))
    out = []
    for dy in range(-Ri, Ri + 1):
        w2 = R * R - dy * dy
        if w2 >= -1e-9:
            out.append((dy, int(math.floor(math.sqrt(max(w2, 0.0)) + 1e-9))))
    return out


def _shift_rows(a: np.ndarray, dy: int, fill: float) -> np.ndarray:
    """``out[i] = a[i + dy]`` with ``fill`` outside."""
    if dy == 0:
        return a
    out = np.full_like(a, fill)
    if dy > 0:
        out[:-dy] = a[dy:]
    else:
        out[-dy:] = a[:dy]
    return out


def disc_sum(a: np.ndarray, R: float) -> np.ndarray:
    """Sum of ``a`` over integer offsets within distance ``R`` (cells), zero outside."""
    m0, m1 = a.shape
    c = np.zeros((m0, m1 + 1))
    np.cumsum(a, axis=1, out=c[:, 1:])
    cols = np.arange(m1)
    cache: dict[int, np.ndarray] = {}
    out = np.zeros(a.shape)
    for dy, w in _chords(R):
        if w not in cache:
            hi = np.minimum(cols + w + 1, m1)
            lo = np.maximum(cols - w, 0)
            cache[w] = c[:, hi] - c[:, lo]
        out += _shift_rows(cache[w], dy, 0.0)
    return out


def disc_max(a: np.ndarray, R: float) -> np.ndarray:
    """Maximum of ``a`` over integer offsets within distance ``R`` (cells)."""
    out = np.full(a.shape, -np.inf)
    m0 = a.shape[0]
    last_w, f = None, None
    for dy, w in sorted(_chords(R), key=lambda c: c[1]):
        if w != last_w:
            f = ndimage.maximum_filter1d(a, 2 * w + 1, axis=1, mode="constant", cval=-np.inf)
            last_w = w
        if abs(dy) >= m0:
            continue
        if dy >= 0:
            np.maximum(out[:m0 - dy], f[dy:], out=out[:m0 - dy])
        else:
            np.maximum(out[-dy:], f[:dy], out=out[-dy:])
    return out


def _pool(a: np.ndarray, p: int) -> np.ndarray:
    if p == 1:
        return a
    m0, m1 = a.shape
    P0, P1 = -(-m0 // p), -(-m1 // p)
    b = np.zeros((P0 * p, P1 * p))
    b[:m0, :m1] = a
    return b.reshape(P0, p, P1, p).sum(axis=(1, 3))


class _DiscSummer:
    """Disc sums of several arrays by FFT, reusing their spectra across radii."""

    def __init__(self, arrays: Sequence[np.ndarray], R_max: float):
        self.shape = arrays[0].shape
        # offsets beyond the array size never meet a cell
        self.pads = tuple(min(int(math.floor(R_max + 1e-9)), m - 1) for m in self.shape)
        self.fshape = tuple(sfft.next_fast_len(m + 2 * q, real=True) for m, q in zip(self.shape, self.pads))
        self.spectra = [sfft.rfft2(a, self.fshape) for a in arrays]

    def __call__(self, R: float) -> list[np.ndarray]:
        Ri = int(math.floor(R + 1e-9))
        q0, q1 = (min(Ri, q) for q in self.pads)
        o0, o1 = np.arange(-q0, q0 + 1), np.arange(-q1, q1 + 1)
        kern = (o0[:, None] ** 2 + o1[None, :] ** 2 <= R * R + 1e-9).astype(float)
        K = sfft.rfft2(kern, self.fshape)
        m0, m1 = self.shape
        out = []
        for S in self.spectra:
            full = sfft.irfft2(S * K, self.fshape)
            out.append(full[q0:q0 + m0, q1:q1 + m1])
        return out


def _pooled_centers(spec: GridSpec, p: int) -> tuple[np.ndarray, np.ndarray]:
    out = []
    for i in range(2):
        P = -(-spec.counts[i] // p)
        out.append(spec.lower[i] + spec.h[i] * p * (np.arange(P) + 0.5))
    return out[0], out[1]


# -- maximal functions ---------------------------------------------------------------

def _mass_and_count(source: GridMeasure | ScalarField) -> tuple[np.ndarray, np.ndarray, tuple]:
    spec = source.spec
    if spec.N != 2:
        raise ValueError("maximal functions are implemented on planar grids")
    if not np.isclose(spec.h[0], spec.h[1], rtol=1e-9):
        raise ValueError("maximal functions need square cells")
    if isinstance(source, GridMeasure):
        return np.asarray(source.weights, float), np.ones(spec.shape), source.atoms
    valid = ~source.mask
    mass = np.where(valid, np.abs(source.values), 0.0) * spec.cell_volume
    return mass, valid.astype(float), ()


def _atom_sums(xs: np.ndarray, ys: np.ndarray, atoms, r: float) -> np.ndarray:
    out = np.zeros((xs.size, ys.size))
    for (px, py), m in atoms:
        out += m * (((xs[:, None] - px) ** 2 + (ys[None, :] - py) ** 2) <= r * r * (1 + 1e-12))
    return out


def _pool_factor(R: float, params: MaximalParams) -> int:
    if params.centered:
        return 1
    p = params.stride
    while R / p > 2 * params.pool_radius:
        p *= 2
    return p


def hl_maximal(source: GridMeasure | ScalarField, params: MaximalParams | None = None) -> ScalarField:
    """Hardy-Littlewood maximal function on the grid.

    Uncentered (default): ``sup mass(B(a, r)) / |B(a, r)|`` over discrete balls
    containing the cell center.  Centered: balls centred at the cell.
    Fields enter through ``|f| cellVolume``; masked cells carry no mass and no
    volume.  The discrete sup is a lower bound of the continuous one.
    """
    params = params or MaximalParams()
    spec = source.spec
    mass, count, atoms = _mass_and_count(source)
    h = spec.h[0]
    vol = spec.cell_volume
    best = np.full(spec.shape, -np.inf)
    radii = params.radii(spec)
    plan = [(r, _pool_factor(r / h, params)) for r in radii]
    summers = {p: _DiscSummer([_pool(mass, p), _pool(count, p)], max(r for r, q in plan if q == p) / h / p)
               for p in sorted({p for _, p in plan})}
    for r, p in plan:
        R = r / h
        s, c = summers[p](R / p)
        c = np.rint(c)
        s = np.maximum(s, 0.0)
        if atoms:
            xs, ys = (spec.axis(0), spec.axis(1)) if p == 1 else _pooled_centers(spec, p)
            s = s + _atom_sums(xs, ys, atoms, r)
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = np.where(c > 0, s / (c * vol), -np.inf)
        if params.centered:
            np.maximum(best, avg, out=best)
            continue
        shrink = (p - 1) * math.sqrt(2) / 2 / p
        dil = disc_max(avg, R / p - shrink)
        if p > 1:
            dil = np.repeat(np.repeat(dil, p, axis=0), p, axis=1)[:spec.counts[0], :spec.counts[1]]
        np.maximum(best, dil, out=best)
    mask = ~np.isfinite(best)
    if isinstance(source, ScalarField):
        mask |= source.mask & ~np.isfinite(best)
    return ScalarField(spec, np.where(mask, 0.0, best), mask)


# -- Riesz potentials ----------------------------------------------------------------

def self_cell_average(alpha: float, N: int, h: Sequence[float]) -> float:
    """Average of ``|y|^(alpha - N)`` over the ball with the volume of one cell: ``(N/alpha) rho^(alpha-N)``."""
    vol = math.prod(h)
    rho = (vol / (math.pi ** (N / 2) / math.gamma(N / 2 + 1))) ** (1 / N)
    return N / alpha * rho ** (alpha - N)


def riesz_potential(mu: GridMeasure, params: RieszParams | None = None) -> ScalarField:
    """``I_alpha(mu)(x) = int |x - y|^(alpha - N) dmu(y)`` at cell centers; atom cells masked."""
    params = params or RieszParams()
    spec = mu.spec
    if spec.N != params.N:
        raise ValueError("dimension mismatch")
    a, N = params.alpha, spec.N
    out = np.zeros(spec.shape)
    w = np.asarray(mu.weights)
    if w.any():
        offs = [spec.h[i] * np.arange(-spec.counts[i] + 1, spec.counts[i]) for i in range(N)]
        grids = np.meshgrid(*offs, indexing="ij", sparse=True)
        r2 = sum(g * g for g in grids)
        with np.errstate(divide="ignore"):
            kern = r2 ** ((a - N) / 2)
        kern[tuple(m - 1 for m in spec.counts)] = self_cell_average(a, N, spec.h)
        out += signal.fftconvolve(w, kern, mode="full")[
            tuple(slice(m - 1, 2 * m - 1) for m in spec.counts)]
    mask = np.zeros(spec.shape, bool)
    xs = spec.coords()
    for p, m in mu.atoms:
        with np.errstate(divide="ignore"):
            out = out + m * sum((x - c) ** 2 for x, c in zip(xs, p)) ** ((a - N) / 2)
        hit = np.ones(spec.shape, bool)
        for i in range(N):
            hit &= np.broadcast_to(np.abs(xs[i] - p[i]) < 1e-12 * spec.h[i], spec.shape)
        mask |= hit
        mask |= ~np.isfinite(out)
    return ScalarField(spec, out, mask)


def maximal_riesz(mu: GridMeasure, rp: RieszParams | None = None, mp: MaximalParams | None = None) -> ScalarField:
    """``M(I_alpha(mu))`` with atom cells excluded from the ball averages."""
    return hl_maximal(riesz_potential(mu, rp), mp)


# -- weak-type profiles ----------------------------------------------------------------

@dataclass(frozen=True)
class WeakTypeProfile:
    thresholds: tuple[float, ...]
    measures: tuple[float, ...]
    products: tuple[float, ...]
    resolved: tuple[bool, ...]
    sup: float


def weak_type_profile(fld: ScalarField, p: float, thresholds: Sequence[float], strict: bool = True,
                      min_cells: int = 20, max_fraction: float = 0.2) -> WeakTypeProfile:
    """``t^p |{f > t}|`` (or ``>=``) by cell counting, with the resolved range flagged."""
    ts = tuple(float(t) for t in thresholds)
    if not ts:
        raise ValueError("empty threshold schedule")
    v = np.asarray(fld.values)
    total = fld.spec.size
    meas, prods, ok = [], [], []
    for t in ts:
        cnt = int(np.count_nonzero(v > t if strict else v >= t))
        meas.append(cnt * fld.spec.cell_volume)
        prods.append(t**p * meas[-1])
        ok.append(cnt >= min_cells and cnt <= max_fraction * total)
    res = [q for q, good in zip(prods, ok) if good]
    return WeakTypeProfile(ts, tuple(meas), tuple(prods), tuple(ok), max(res) if res else math.nan)


# -- Bojarski-type pointwise inequality ---------------------------------------------

@dataclass(frozen=True)
class BojarskiResult:
    ratio: float
    pairs: int
    counterexamples: int


def sample_pairs(spec: GridSpec, count: int, max_dist: float, region=None, seed: int = 42) -> np.ndarray:
    """Seeded index pairs ``(i0, j0, i1, j1)`` with ``0 < |x - y| <= max_dist``, both in ``region``."""
    rng = np.random.default_rng(seed)
    sel = region_mask(spec, region)
    idx = np.argwhere(sel)
    if len(idx) == 0:
        raise ValueError("empty region")
    h = np.asarray(spec.h)
    out = []
    while sum(len(o) for o in out) < count:
        a = idx[rng.integers(len(idx), size=4 * count)]
        rad = max_dist * np.sqrt(rng.uniform(0, 1, 4 * count))
        th = rng.uniform(0, 2 * np.pi, 4 * count)
        b = a + np.rint(np.stack([rad * np.cos(th), rad * np.sin(th)], 1) / h).astype(int)
        inb = np.all((b >= 0) & (b < np.asarray(spec.counts)), axis=1)
        a, b = a[inb], b[inb]
        good = sel[b[:, 0], b[:, 1]]
        d = np.hypot(*((b - a) * h).T)
        good &= (d > 0) & (d <= max_dist * (1 + 1e-12))
        out.append(np.concatenate([a[good], b[good]], axis=1))
    return np.concatenate(out)[:count]


def bojarski_ratio(f: ScalarField, params: MaximalParams, pairs: int = 2000, region=None,
                   seed: int = 42) -> BojarskiResult:
    """``max |f(x) - f(y)| / (|x - y| (M^rho(x) + M^rho(y)))`` over seeded pairs with ``|x - y| <= rho / 3``.

    ``M^rho`` is the centered maximal function of ``|grad f|`` with radii below ``rho``.
    """
    if params.mode != "local":
        raise ValueError("the Bojarski inequality uses the local maximal function")
    if pairs < 1000:
        raise ValueError("need at least 1000 pairs")
    g = gradient_magnitude(f)
    M = hl_maximal(g, MaximalParams(mode="local", rho=params.rho, per_octave=params.per_octave,
                                    centered=True)).values
    P = sample_pairs(f.spec, pairs, params.rho / 3, region, seed)
    v = np.asarray(f.values)
    h = np.asarray(f.spec.h)
    num = np.abs(v[P[:, 0], P[:, 1]] - v[P[:, 2], P[:, 3]])
    den = np.hypot(*((P[:, :2] - P[:, 2:]) * h).T) * (M[P[:, 0], P[:, 1]] + M[P[:, 2], P[:, 3]])
    bad = (den == 0) & (num > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1), 0.0)
    return BojarskiResult(float(ratio.max()) if not bad.any() else math.inf, len(P), int(bad.sum()))


# -- proof-level inequalities --------------------------------------------------------

def calibrate_bojarski(cells: int = 512, rho: float = 0.3, pairs: int = 2000, seed: int = 42) -> BojarskiResult:
    """Empirical ``C_2``: the larger Bojarski ratio of a linear function and a mollified ``log(1/|z|)``.

    The log case is sampled on the annulus ``0.2 <= |z| <= 0.8`` of ``[-1, 1]^2``
    at mollification radius 0.05.
    """
    from .zoo import mollify, parse_model

    spec = GridSpec.cube(1.0, cells, 2)
    params = MaximalParams(mode="local", rho=rho, per_octave=16)
    x, y = spec.coords()
    lin = ScalarField(spec, np.broadcast_to(2 * x - 3 * y, spec.shape).copy())
    annulus = lambda xs: (xs[0] ** 2 + xs[1] ** 2 >= 0.04) & (xs[0] ** 2 + xs[1] ** 2 <= 0.64)
    log = mollify(parse_model("neg:lognorm:c=1", 1), 0.05, spec)
    a = bojarski_ratio(lin, params, pairs, seed=seed)
    b = bojarski_ratio(log, params, pairs, region=annulus, seed=seed)
    return BojarskiResult(max(a.ratio, b.ratio), a.pairs + b.pairs, a.counterexamples + b.counterexamples)


def normalized_indicator(spec: GridSpec, r: float) -> np.ndarray:
    """``chi_r = 1_{B(0, r)} / |B(0, r)|`` on the offsets of the grid (odd size, centred)."""
    h = spec.h[0]
    R = int(math.ceil(r / h)) + 1
    o = h * np.arange(-R, R + 1)
    ind = (o[:, None] ** 2 + o[None, :] ** 2 <= r * r).astype(float)
    return ind / (ind.sum() * spec.cell_volume)


def _embed(a: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros((size, size))
    k = (size - a.shape[0]) // 2
    out[k:k + a.shape[0], k:k + a.shape[1]] = a
    return out


def convolution_excess(spec: GridSpec, s: float, r: float) -> float:
    """``max (chi_s * chi_r) / (2^N chi_{2r})`` over the support of the convolution."""
    a = normalized_indicator(spec, s)
    b = normalized_indicator(spec, r)
    conv = signal.fftconvolve(a, b) * spec.cell_volume
    big = normalized_indicator(spec, 2 * r)
    size = max(conv.shape[0], big.shape[0])
    conv, env = (_embed(c, size) for c in (conv, big))
    support = conv > 1e-12 * conv.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(support, conv / (4 * env), 0.0)
    return float(ratio.max())


def hedberg_gap(x: np.ndarray, delta: float, alpha: float, M_value: float, mass: float, N: int = 2) -> float:
    """``I_alpha(delta_0)(x) / (delta^alpha M(x) + delta^(alpha - N) ||mu||)`` for a unit atom at 0."""
    I = float(np.linalg.norm(x)) ** (alpha - N)
    return I / (delta**alpha * M_value + delta ** (alpha - N) * mass)
