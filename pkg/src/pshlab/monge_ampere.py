"""Monge-Ampere measures, the Skoda integrability profiler and lemma-level identities.

Conventions: ``d^c = (i / 2 pi)(dbar - d)`` so ``dd^c = (i / pi) d dbar``.  In
C^n this gives ``(dd^c u)^n = kappa_n det(u_{j kbar}) d lambda`` with
``kappa_n = 2^n n! / pi^n``; for ``n = 1`` it is ``(1 / 2 pi) Laplacian``, the
normalization for which ``dd^c log|z|`` is the unit Dirac mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import (
    GridMeasure,
    GridSpec,
    ScalarField,
    SlopeFit,
    derivative,
    fit_line,
    region_mask,
    sample_field,
    stable_sum,
)
from .zoo import ModelFunction, evaluate_coords, known_properties, mollify, sample_model

REPRESENTATIONS = ("analytic-density", "hessian-determinant", "laplacian-1d")
CLIP_WARN = 0.01


def kappa_closed_form(n: int) -> float:
    return 2.0**n * math.factorial(n) / math.pi**n


def skoda_threshold(alpha: float, n: int) -> float:
    """``2 alpha / (alpha + n (2 - alpha))``."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    return 2 * alpha / (alpha + n * (2 - alpha))


# -- contexts ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MAContext:
    """A potential together with the representation used for ``(dd^c u)^n``."""

    n: int
    u: ModelFunction | ScalarField
    representation: str = "analytic-density"
    kappa: float | None = None

    def __post_init__(self) -> None:
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.kappa is None:
            from .calibration import load_kappa
            object.__setattr__(self, "kappa", load_kappa(self.n))
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if isinstance(self.u, ModelFunction):
            if self.u.n != self.n:
                raise ValueError("potential dimension differs from n")
            if self.representation == "hessian-determinant":
                raise ValueError("hessian-determinant needs a smooth (mollified) field")
            if self.representation == "analytic-density" and known_properties(self.u).ma_exponent is None:
                raise ValueError("analytic-density needs a model with a certified density")
        else:
            if self.u.spec.n != self.n:
                raise ValueError("potential dimension differs from n")
            if self.representation == "analytic-density":
                raise ValueError("analytic-density needs a catalog model")
            if self.representation == "hessian-determinant" and self.u.mask.any():
                raise ValueError("hessian-determinant needs an unmasked field")
        if self.representation == "laplacian-1d" and self.n != 1:
            raise ValueError("laplacian-1d requires n = 1")

    @property
    def alpha(self) -> float | None:
        if isinstance(self.u, ModelFunction):
            return known_properties(self.u).holder
        return None

    def measure_on(self, spec: GridSpec) -> GridMeasure:
        return ma_measure(self, spec)


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff: 1 on ``|x| <= inner``, 0 on ``|x| >= outer``, quintic (C^2) step between."""

    inner: float = 0.4
    outer: float = 0.8

    def __post_init__(self) -> None:
        if not 0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    def profile(self, r: np.ndarray) -> np.ndarray:
        t = np.clip((np.asarray(r, float) - self.inner) / (self.outer - self.inner), 0.0, 1.0)
        return 1.0 - t**3 * (10 - 15 * t + 6 * t * t)

    def __call__(self, xs) -> np.ndarray:
        return self.profile(np.sqrt(sum(x * x for x in xs)))

    @property
    def c2_norm(self) -> float:
        """``sup |chi| + sup |chi'| + sup |chi''|`` of the radial profile."""
        w = self.outer - self.inner
        return 1.0 + 1.875 / w + (10 / math.sqrt(3)) / w**2


@dataclass(frozen=True, eq=False)
class TruncationFamily:
    """``phi_N = max(phi, -N)`` and ``psi_N = phi_{N-1} - phi_N`` on one grid."""

    base: ScalarField
    n_max: int = 20

    def member(self, N: int) -> np.ndarray:
        return np.maximum(self.base.values, -float(N))

    def psi(self, N: int) -> np.ndarray:
        if N < 1:
            raise ValueError("psi_N is defined for N >= 1")
        return self.member(N - 1) - self.member(N)

    def violations(self) -> list[str]:
        """Cellwise check of ``0 <= psi_N <= 1`` and its support properties."""
        out = []
        v = self.base.values
        for N in range(1, self.n_max + 1):
            p = self.psi(N)
            if (p < 0).any() or (p > 1).any():
                out.append(f"N={N}: psi outside [0, 1]")
            if (p[v >= -N + 1] != 0).any():
                out.append(f"N={N}: psi nonzero outside {{phi < -N + 1}}")
            if (p[v < -N] != 1).any():
                out.append(f"N={N}: psi not 1 on {{phi < -N}}")
        return out


# -- cell integrals of homogeneous densities ----------------------------------

def _ball_integral(beta: float, N: int, R: np.ndarray) -> np.ndarray:
    area = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    return area * R ** (N + beta) / (N + beta)


def _box_integrals(beta: float, lo: np.ndarray, hi: np.ndarray, sub: int, depth: int) -> np.ndarray:
    """Integrals of ``|x|^beta`` over boxes ``[lo, hi]`` (rows), singularity at 0."""
    N = lo.shape[1]
    touch = np.all((lo <= 0) & (hi >= 0), axis=1)
    out = np.zeros(lo.shape[0])
    far = ~touch
    if far.any():
        l, hh = lo[far], hi[far]
        frac = (np.arange(sub) + 0.5) / sub
        grids = np.meshgrid(*[frac] * N, indexing="ij")
        offs = np.stack([g.ravel() for g in grids], axis=1)
        acc = np.zeros(l.shape[0])
        for o in offs:
            p = l + o * (hh - l)
            acc += np.sum(p * p, axis=1) ** (beta / 2)
        out[far] = acc / len(offs) * np.prod(hh - l, axis=1)
    if touch.any():
        l, hh = lo[touch], hi[touch]
        if depth == 0:
            vol = np.prod(hh - l, axis=1)
            R = (vol / (math.pi ** (N / 2) / math.gamma(N / 2 + 1))) ** (1 / N)
            out[touch] = _ball_integral(beta, N, R)
        else:
            mid = 0.5 * (l + hh)
            mid = np.where(np.abs(mid) < 1e-9 * (hh - l), 0.0, mid)
            corners = np.array(np.meshgrid(*[[0, 1]] * N, indexing="ij")).reshape(N, -1).T
            clo, chi = [], []
            for c in corners:
                clo.append(np.where(c, mid, l))
                chi.append(np.where(c, hh, mid))
            clo = np.concatenate(clo)
            chi = np.concatenate(chi)
            vals = _box_integrals(beta, clo, chi, sub, depth - 1)
            out[touch] = vals.reshape(len(corners), -1).sum(axis=0)
    return out


def power_cell_integrals(beta: float, spec: GridSpec, center: Sequence[float] | None = None,
                         near: int = 3) -> np.ndarray:
    """``int_cell |x - center|^beta dx`` for every cell (``beta > -N``).

    Far cells use the midpoint rule; cells within ``near`` cells of the
    singularity are subdivided, recursively around the singular point.
    """
    N = spec.N
    if not beta > -N:
        raise ValueError("density not locally integrable")
    ctr = np.zeros(N) if center is None else np.asarray(center, float)
    xs = [x - c for x, c in zip(spec.coords(), ctr)]
    with np.errstate(divide="ignore"):
        out = sum(x * x for x in xs) ** (beta / 2) * spec.cell_volume
    idx = [int(np.clip(math.floor((c - lo) / h), 0, m - 1)) for c, lo, h, m in zip(ctr, spec.lower, spec.h, spec.counts)]
    sl = tuple(slice(max(i - near, 0), min(i + near + 1, m)) for i, m in zip(idx, spec.counts))
    block = np.meshgrid(*[np.arange(s.start, s.stop) for s in sl], indexing="ij")
    lo = np.stack([spec.lower[i] + spec.h[i] * block[i].ravel() - ctr[i] for i in range(N)], axis=1)
    hi = lo + np.asarray(spec.h)
    # snap faces through the singular point so subdivision meets it exactly
    tiny = 1e-9 * np.asarray(spec.h)
    lo = np.where(np.abs(lo) < tiny, 0.0, lo)
    hi = np.where(np.abs(hi) < tiny, 0.0, hi)
    depth = 24 if N == 2 else 12
    vals = _box_integrals(beta, lo, hi, 4 if N == 2 else 2, depth)
    out = np.array(np.broadcast_to(out, spec.shape))
    out[sl] = vals.reshape(block[0].shape)
    return out


# -- Monge-Ampere measures ------------------------------------------------------

def _plane(spec: GridSpec, j: int) -> GridSpec:
    return GridSpec(spec.lower[2 * j:2 * j + 2], spec.upper[2 * j:2 * j + 2], spec.counts[2 * j:2 * j + 2])


def _center_reals(model: ModelFunction) -> list[float]:
    out = []
    for c in (model.center or (0j,) * model.n):
        out += [complex(c).real, complex(c).imag]
    return out


def analytic_weights(model: ModelFunction, spec: GridSpec, kappa: float) -> np.ndarray:
    """``kappa det(u_{j kbar})`` integrated over cells for radial and separable powers.

    ``det`` is ``(a/2)^(n+1) |z|^(n(a-2))`` for ``|z|^a`` and
    ``(a/2)^(2n) prod |z_j|^(a-2)`` for ``sum |z_j|^a``.
    """
    a, n = model.alpha, model.n
    ctr = _center_reals(model)
    if model.sign < 0:
        raise ValueError("negated powers have no Monge-Ampere measure")
    if model.kind == "radial":
        return kappa * (a / 2) ** (n + 1) * power_cell_integrals(n * (a - 2), spec, ctr)
    if model.kind == "sep":
        out = np.array(kappa * (a / 2) ** (2 * n))
        for j in range(n):
            p = power_cell_integrals(a - 2, _plane(spec, j), ctr[2 * j:2 * j + 2])
            shape = [1] * spec.N
            shape[2 * j], shape[2 * j + 1] = p.shape
            out = out * p.reshape(shape)
        return np.broadcast_to(out, spec.shape)
    raise ValueError(f"no certified density for {model.kind}")


def complex_hessian_det(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    """``det(u_{j kbar})`` from compact second differences; boundary layer set to 0.

    ``u_{j kbar} = (1/4)[(u_{x_j x_k} + u_{y_j y_k}) + i (u_{x_j y_k} - u_{y_j x_k})]``.
    """
    n = spec.n
    u = np.asarray(values, float)
    inner = tuple(slice(1, -1) for _ in range(spec.N))

    def at(offsets: dict) -> np.ndarray:
        sl = [slice(1, -1)] * spec.N
        for ax, o in offsets.items():
            sl[ax] = slice(1 + o, (-1 + o) or None)
        return u[tuple(sl)]

    def d2(a: int, b: int) -> np.ndarray:
        ha, hb = spec.h[a], spec.h[b]
        if a == b:
            return (at({a: 1}) - 2 * u[inner] + at({a: -1})) / (ha * ha)
        return (at({a: 1, b: 1}) - at({a: 1, b: -1}) - at({a: -1, b: 1}) + at({a: -1, b: -1})) / (4 * ha * hb)

    def entry(j: int, k: int) -> np.ndarray:
        xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
        re = 0.25 * (d2(xj, xk) + d2(yj, yk))
        if j == k:
            return re
        return re + 0.25j * (d2(xj, yk) - d2(yj, xk))

    if n == 1:
        det = entry(0, 0)
    elif n == 2:
        a12 = entry(0, 1)
        det = entry(0, 0) * entry(1, 1) - (a12.real**2 + a12.imag**2)
    else:
        H = np.empty(u[inner].shape + (n, n), complex)
        for j in range(n):
            for k in range(j, n):
                e = entry(j, k)
                H[..., j, k] = e
                H[..., k, j] = np.conj(e)
        det = np.linalg.det(H).real
    out = np.zeros(spec.shape)
    out[inner] = det
    return out


def laplacian_weights(values: np.ndarray, mask: np.ndarray, spec: GridSpec, block: int = 6) -> np.ndarray:
    """``(1/2 pi)`` times the 5-point Laplacian times cell area.

    The stencil never reads a masked value: the masked cells grown by a disc
    of ``block`` cells form a block whose total mass is the discrete flux
    through its boundary (the sum of the stencil over the block), assigned to
    the masked cells.  Growing the block keeps the O(h^2 / r^4) stencil noise
    next to a log singularity out of the clipped mass.
    """
    h0, h1 = spec.h
    u = np.asarray(values, float)
    lap = np.zeros(spec.shape)
    lap[1:-1, 1:-1] = ((u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / h0**2
                       + (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / h1**2)
    w = lap * spec.cell_volume / (2 * np.pi)
    if mask.any():
        from scipy import ndimage
        cross = ndimage.generate_binary_structure(2, 1)
        o = np.arange(-block, block + 1)
        disc = o[:, None] ** 2 + o[None, :] ** 2 <= block * block
        grown = ndimage.binary_dilation(mask, disc)
        labels, count = ndimage.label(grown, cross)
        for lab in range(1, count + 1):
            sel = labels == lab
            flux = 0.0
            for ax, hh in ((0, h0), (1, h1)):
                other = h1 if ax == 0 else h0
                for step in (1, -1):
                    out_nb = np.roll(sel, step, axis=ax)
                    edge = out_nb & ~sel
                    src = np.roll(edge, -step, axis=ax) & sel
                    diff = np.roll(u, -step, axis=ax)[src] - u[src]
                    flux += stable_sum(diff) * other / hh
            w[sel] = 0.0
            core = sel & mask
            w[core] = flux / (2 * np.pi) / core.sum()
    return w


def ma_measure(ctx: MAContext, spec: GridSpec) -> GridMeasure:
    """``(dd^c u)^n`` as cell weights on ``spec``; negative weights are clipped and reported."""
    if spec.n != ctx.n:
        raise ValueError("grid dimension differs from n")
    rep = ctx.representation
    if rep == "analytic-density":
        w = np.array(analytic_weights(ctx.u, spec, ctx.kappa))
    else:
        if isinstance(ctx.u, ModelFunction):
            fld = sample_model(ctx.u, spec)
        else:
            fld = ctx.u
            if fld.spec != spec:
                raise ValueError("field potential lives on a different grid")
        if rep == "laplacian-1d":
            w = laplacian_weights(fld.values, fld.mask, spec) * (ctx.kappa / kappa_closed_form(1))
        else:
            w = ctx.kappa * complex_hessian_det(fld.values, spec) * spec.cell_volume
    neg = w < 0
    clipped = -stable_sum(w[neg]) if neg.any() else 0.0
    w[neg] = 0.0
    total = stable_sum(w)
    frac = clipped / (total + clipped) if total + clipped > 0 else 0.0
    notes = {"representation": rep, "clipped_mass": clipped, "clipped_fraction": frac}
    if frac > CLIP_WARN:
        notes["warning"] = f"clipped mass fraction {frac:.3g} exceeds 1%"
    return GridMeasure(spec, w, notes=notes)


def mixed_hessian_mass(f: ScalarField, g: ScalarField, region=None, kappa: float | None = None) -> float:
    """Mass of ``dd^c f ^ dd^c g`` over ``region`` for n = 2 (mixed discriminant form)."""
    spec = f.spec
    if spec.n != 2 or g.spec != spec:
        raise ValueError("mixed mass is implemented for two fields on one C^2 grid")
    kappa = kappa_closed_form(2) if kappa is None else kappa
    hf = _hessian_entries(f.values, spec)
    hg = _hessian_entries(g.values, spec)
    a11, a22, a12 = hf
    b11, b22, b12 = hg
    d = 0.5 * (a11 * b22 + a22 * b11) - (a12 * np.conj(b12)).real
    sel = region_mask(spec, region)[tuple(slice(1, -1) for _ in range(4))]
    return kappa * stable_sum(np.where(sel, d, 0.0)) * spec.cell_volume


def _hessian_entries(values, spec):
    """Complex Hessian entries (a11, a22, a12) for n = 2 on interior cells (nested central differences)."""
    u = np.asarray(values, float)
    h = spec.h
    inner = tuple(slice(1, -1) for _ in range(4))

    def dd(a, b):
        return derivative(derivative(u, h[a], a), h[b], b)[inner]

    a11 = 0.25 * (dd(0, 0) + dd(1, 1))
    a22 = 0.25 * (dd(2, 2) + dd(3, 3))
    a12 = 0.25 * (dd(0, 2) + dd(1, 3)) + 0.25j * (dd(0, 3) - dd(1, 2))
    return a11, a22, a12


# -- Skoda profile ---------------------------------------------------------------

@dataclass(frozen=True)
class Annulus:
    k: int
    value: float
    resolution: int
    clipped_fraction: float
    valid: bool


@dataclass(frozen=True)
class ConvergenceVerdict:
    verdict: str
    exponent: float
    fit: SlopeFit


def _annulus_axes(phi: ModelFunction, ctx: MAContext) -> tuple[int, ...]:
    """Complex coordinates whose modulus defines the annulus."""
    u = ctx.u
    if (phi.kind == "logcoord" and isinstance(u, ModelFunction) and u.kind == "sep"):
        return (phi.j - 1,)
    return tuple(range(ctx.n))


def annulus_grid(k: int, n: int, axes: Sequence[int], cells: int, fixed_cells: int = 32,
                 fixed_half: float = 1.0) -> GridSpec:
    rho = 2.0**-k
    lower, upper, counts = [], [], []
    for j in range(n):
        if j in axes:
            lower += [-rho, -rho]
            upper += [rho, rho]
            counts += [cells, cells]
        else:
            lower += [-fixed_half, -fixed_half]
            upper += [fixed_half, fixed_half]
            counts += [fixed_cells, fixed_cells]
    return GridSpec(tuple(lower), tuple(upper), tuple(counts))


def skoda_integral_profile(phi: ModelFunction, ctx: MAContext, ks: Sequence[int],
                           cells: int | None = None, min_radial_cells: int | None = None,
                           fixed_cells: int = 32) -> list[Annulus]:
    """``I_k`` = integral of ``exp(-phi)`` against ``(dd^c u)^n`` over dyadic annuli.

    Each annulus ``2^(-k-1) <= |z| <= 2^(-k)`` gets its own grid of side
    ``2^(-k+1)``.  For a coordinate log model paired with a separable power
    the annulus is taken in ``|z_j|`` and the other coordinates range over a
    fixed square.
    """
    if not isinstance(ctx.u, ModelFunction):
        raise ValueError("the profile re-grids the potential and needs a catalog model")
    n = ctx.n
    axes = _annulus_axes(phi, ctx)
    if cells is None:
        cells = 128 if len(axes) == 1 else 64
    if min_radial_cells is None:
        min_radial_cells = 32 if len(axes) == 1 else 16
    out = []
    for k in ks:
        spec = annulus_grid(k, n, axes, cells, fixed_cells)
        rho = 2.0**-k
        mu = ma_measure(ctx, spec)
        xs = spec.coords()

        def radius(xs=xs):
            return np.sqrt(sum(xs[2 * j] ** 2 + xs[2 * j + 1] ** 2 for j in axes))

        r = radius()
        sel = np.broadcast_to((r >= rho / 2) & (r <= rho), spec.shape)
        with np.errstate(over="ignore"):
            e = np.exp(-evaluate_coords(phi, xs))
        val = stable_sum(np.where(sel, e * mu.weights, 0.0))
        radial = int(round(0.5 * rho / spec.h[2 * axes[0]]))
        ok = radial >= min_radial_cells and val > 0 and math.isfinite(val)
        out.append(Annulus(int(k), val, radial, mu.notes["clipped_fraction"], ok))
    return out


def classify_convergence(profile: Sequence[Annulus] | Sequence[float], ks: Sequence[int] | None = None,
                         threshold: float = 0.05) -> ConvergenceVerdict:
    """Slope ``s`` of ``log I_k`` against ``k log 2``; exponent estimate ``-s``."""
    if profile and isinstance(profile[0], Annulus):
        pts = [(a.k, a.value) for a in profile if a.valid]
    else:
        ks = range(len(profile)) if ks is None else ks
        pts = [(k, v) for k, v in zip(ks, profile) if v > 0 and math.isfinite(v)]
    if len(pts) < 4:
        raise ValueError("need at least 4 valid annuli")
    fit = fit_line([k * math.log(2) for k, _ in pts], [math.log(v) for _, v in pts])
    s = fit.slope
    verdict = "converges" if s < -threshold else "diverges" if s > threshold else "inconclusive"
    return ConvergenceVerdict(verdict, -s, fit)


def predicted_convergence(phi: ModelFunction, u: ModelFunction) -> bool | None:
    """Exact prediction where the integrand is an explicit power, else the sufficient test.

    ``None`` means no prediction: the threshold condition fails and no exact
    criterion is known.
    """
    n = u.n
    a = known_properties(u).holder
    if u.kind == "radial" and phi.kind == "lognorm" and not phi.center and not u.center:
        return phi.c < n * a
    if u.kind == "sep" and phi.kind == "logcoord":
        return phi.c < a
    nu = known_properties(phi).lelong
    if nu is not None and a is not None and nu < skoda_threshold(a, n):
        return True
    return None


# -- integration by parts -------------------------------------------------------

def _perm_sign(seq: Sequence[int]) -> int:
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                sign = -sign
    return sign


def wedge(a: dict, b: dict) -> dict:
    """Exterior product of forms stored as ``{sorted index tuple: coefficient array}``."""
    out: dict = {}
    for ia, ca in a.items():
        for ib, cb in b.items():
            if set(ia) & set(ib):
                continue
            key = tuple(sorted(ia + ib))
            term = _perm_sign(ia + ib) * ca * cb
            out[key] = out[key] + term if key in out else term
    return out


def d_function(f: np.ndarray, h: Sequence[float]) -> dict:
    return {(i,): derivative(f, h[i], i) for i in range(len(h))}


def dc_function(f: np.ndarray, h: Sequence[float]) -> dict:
    """``d^c f = (1/2 pi) sum_j (-f_{y_j} dx_j + f_{x_j} dy_j)``."""
    out = {}
    for j in range(len(h) // 2):
        x, y = 2 * j, 2 * j + 1
        out[(x,)] = -derivative(f, h[y], y) / (2 * np.pi)
        out[(y,)] = derivative(f, h[x], x) / (2 * np.pi)
    return out


def d_one_form(form: dict, h: Sequence[float]) -> dict:
    out: dict = {}
    for (i,), c in form.items():
        for k in range(len(h)):
            if k == i:
                continue
            key = tuple(sorted((k, i)))
            term = (1 if k < i else -1) * derivative(c, h[k], k)
            out[key] = out[key] + term if key in out else term
    return out


def ddc_function(f: np.ndarray, h: Sequence[float]) -> dict:
    return d_one_form(dc_function(f, h), h)


def scale(form: dict, g) -> dict:
    return {k: v * g for k, v in form.items()}


def top(form: dict, N: int) -> np.ndarray | float:
    return form.get(tuple(range(N)), 0.0)


@dataclass(frozen=True)
class IBPResult:
    lhs: float
    rhs: float
    terms: tuple[float, float, float, float]
    residual: float


def _as_values(f, spec: GridSpec) -> np.ndarray:
    if isinstance(f, ScalarField):
        if f.spec != spec:
            raise ValueError("fields live on different grids")
        if f.mask.any():
            raise ValueError("identity needs smooth unmasked inputs; mollify first")
        return np.asarray(f.values)
    if isinstance(f, ModelFunction):
        fld = sample_model(f, spec)
        if fld.mask.any():
            raise ValueError("identity needs smooth unmasked inputs; mollify first")
        return np.asarray(fld.values)
    return np.asarray(sample_field(f, spec).values)


def verify_ibp_identity(u, phi, cutoff: CutoffSpec, n: int, spec: GridSpec, slab: int = 4) -> IBPResult:
    """Residual of the four-term integration-by-parts identity.

    The left side ``int chi phi (dd^c u)^n`` uses compact second differences;
    the right side ``-int dd^c chi ^ phi u S - int d chi ^ phi d^c u ^ S +
    int d^c chi ^ phi du ^ S + int chi u dd^c phi ^ S`` with
    ``S = (dd^c u)^(n-1)`` is assembled from nested first differences in the
    exterior algebra.  4-D grids are processed in slabs along the first axis.
    """
    if spec.n != n or n not in (1, 2):
        raise ValueError("n must be 1 or 2 and match the grid")
    uv = _as_values(u, spec)
    pv = _as_values(phi, spec)
    N, h = spec.N, spec.h
    kap = kappa_closed_form(n)
    lhs_acc, t_acc = [], [[], [], [], []]
    halo = 3
    m0 = spec.counts[0]
    step = m0 if n == 1 else slab
    ax0 = spec.axis(0)
    for s0 in range(0, m0, step):
        s1 = min(m0, s0 + step)
        a0, a1 = max(0, s0 - halo), min(m0, s1 + halo)
        keep = (slice(s0 - a0, s0 - a0 + (s1 - s0)),)
        sub = GridSpec((ax0[a0] - h[0] / 2,) + spec.lower[1:], (ax0[a1 - 1] + h[0] / 2,) + spec.upper[1:],
                       (a1 - a0,) + spec.counts[1:])
        if a1 - a0 < 4:
            continue
        us, ps = uv[a0:a1], pv[a0:a1]
        chi = np.broadcast_to(cutoff(sub.coords()), sub.shape)
        det = complex_hessian_det(us, sub)
        lhs_acc.append(stable_sum((chi * ps * kap * det)[keep]))
        ddu = ddc_function(us, h)
        S = ddu if n == 2 else {(): 1.0}
        ddchi = ddc_function(chi, h)
        terms = [
            -top(wedge(ddchi, scale(S, ps * us)), N),
            -top(wedge(wedge(d_function(chi, h), scale(dc_function(us, h), ps)), S), N),
            top(wedge(wedge(dc_function(chi, h), scale(d_function(us, h), ps)), S), N),
            top(wedge(scale(ddc_function(ps, h), chi * us), S), N),
        ]
        for acc, t in zip(t_acc, terms):
            acc.append(stable_sum(np.broadcast_to(t, sub.shape)[keep]))
    vol = spec.cell_volume
    lhs = math.fsum(lhs_acc) * vol
    tv = tuple(math.fsum(a) * vol for a in t_acc)
    rhs = math.fsum(tv)
    return IBPResult(lhs, rhs, tv, abs(lhs - rhs) / (1 + abs(lhs)))


# -- calibration -----------------------------------------------------------------

@dataclass(frozen=True)
class KappaCalibration:
    n: int
    kappa: float
    closed_form: float
    radial_ratio: float | None


def calibrate_kappa(n: int, cells: int | None = None, eps: float = 0.3, R: float = 0.8,
                    check_radial: bool = True) -> KappaCalibration:
    """Fix ``kappa_n`` by the anchor ``(dd^c log|z|)^n = delta_0``.

    The smooth potential ``(1/2) log(|z|^2 + eps^2)`` carries mass
    ``(R^2 / (R^2 + eps^2))^n`` on the ball ``B_R``; the Hessian-determinant
    sum over that ball fixes ``kappa_n``.  The cross-check compares the
    Hessian-determinant mass of a mollified radial power with its analytic
    density mass on the same ball.
    """
    cells = cells or (256 if n == 1 else 48)
    spec = GridSpec.cube(1.0, cells, 2 * n)
    f = sample_field(lambda xs: 0.5 * np.log(sum(x * x for x in xs) + eps * eps), spec)
    ball = region_mask(spec, lambda xs: sum(x * x for x in xs) <= R * R)
    s = stable_sum(np.where(ball, complex_hessian_det(f.values, spec), 0.0)) * spec.cell_volume
    kappa = (R * R / (R * R + eps * eps)) ** n / s
    ratio = None
    if check_radial:
        model = ModelFunction("radial", n, alpha=0.5)
        u = mollify(model, max(0.2, 2.5 * max(spec.h)), spec)
        hess = ma_measure(MAContext(n, u, "hessian-determinant", kappa), spec).mass(ball)
        exact = ma_measure(MAContext(n, model, "analytic-density", kappa), spec).mass(ball)
        ratio = hess / exact
    return KappaCalibration(n, kappa, kappa_closed_form(n), ratio)
