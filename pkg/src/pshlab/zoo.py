"""Catalog of model plurisubharmonic and superharmonic functions.

Each model has an exact evaluator and a record of the analytic properties
that are certified for it.  Properties that are not known are ``None``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import signal

from .grid import Coords, GridSpec, ScalarField, sample_field

KINDS = ("radial", "sep", "logcoord", "lognorm", "maxlog", "logprod", "green", "const")


@dataclass(frozen=True)
class ModelFunction:
    """Closed catalog entry.

    ``kind`` is one of :data:`KINDS`.  ``sign = -1`` negates the model, which
    turns the log family into superharmonic functions.  ``center`` translates
    the model: the evaluator sees ``z - center``.
    """

    kind: str
    n: int = 1
    alpha: float | None = None
    c: float | None = None
    j: int | None = None
    cs: tuple[float, ...] = ()
    atoms: tuple[tuple[complex, float], ...] = ()
    radius: float | None = None
    value: float | None = None
    sign: int = 1
    center: tuple[complex, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.n < 1 or self.n > 3:
            raise ValueError("complex dimension must be 1, 2 or 3")
        if self.kind in ("radial", "sep") and not (self.alpha is not None and 0 < self.alpha <= 1):
            raise ValueError("power models need 0 < alpha <= 1")
        if self.kind in ("logcoord", "lognorm", "logprod") and not (self.c is not None and self.c > 0):
            raise ValueError("log models need c > 0")
        if self.kind == "logcoord" and not (self.j is not None and 1 <= self.j <= self.n):
            raise ValueError("coordinate index must satisfy 1 <= j <= n")
        if self.kind == "maxlog":
            if len(self.cs) != self.n or any(c <= 0 for c in self.cs):
                raise ValueError("maxlog needs one positive coefficient per coordinate")
        if self.kind == "green":
            if self.n != 1 or not self.atoms or not (self.radius and self.radius > 0):
                raise ValueError("green potential needs n = 1, atoms and a disc radius")
            if any(m <= 0 or abs(w) >= self.radius for w, m in self.atoms):
                raise ValueError("green atoms need positive mass inside the disc")
        if self.kind == "const" and self.value is None:
            raise ValueError("constant model needs a value")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.center and len(self.center) != self.n:
            raise ValueError("center must have n complex coordinates")

    def scaled(self, t: float) -> "ModelFunction":
        """The model ``t * self`` for ``t > 0`` where the catalog is closed under it."""
        if t <= 0:
            raise ValueError("scale must be positive")
        if self.kind in ("logcoord", "lognorm", "logprod"):
            return replace(self, c=self.c * t)
        if self.kind == "maxlog":
            return replace(self, cs=tuple(c * t for c in self.cs))
        if self.kind == "green":
            return replace(self, atoms=tuple((w, m * t) for w, m in self.atoms))
        if self.kind == "const":
            return replace(self, value=self.value * t)
        raise ValueError(f"{self.kind} is not closed under scaling")

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class ModelProperties:
    psh: bool
    superharmonic: bool
    holder: float | None
    lelong: float | None
    ma_exponent: float | None
    ma_exponent_kind: str | None = None


# -- evaluation ---------------------------------------------------------------

def _moduli(model: ModelFunction, zs: Sequence[np.ndarray]) -> list[np.ndarray]:
    if model.center:
        zs = [z - c for z, c in zip(zs, model.center)]
    return [np.abs(z) for z in zs]


def _eval_complex(model: ModelFunction, zs: Sequence[np.ndarray]) -> np.ndarray:
    k = model.kind
    with np.errstate(divide="ignore", invalid="ignore"):
        if k == "green":
            z = zs[0] - (model.center[0] if model.center else 0)
            out = _green_sum(z, model.atoms, model.radius)
        else:
            r = _moduli(model, zs)
            if k == "radial":
                out = np.sqrt(sum(x * x for x in r)) ** model.alpha
            elif k == "sep":
                out = sum(x ** model.alpha for x in r)
            elif k == "logcoord":
                out = model.c * np.log(r[model.j - 1])
            elif k == "lognorm":
                out = model.c * 0.5 * np.log(sum(x * x for x in r))
            elif k == "logprod":
                out = model.c * sum(np.log(x) for x in r)
            elif k == "maxlog":
                out = np.maximum.reduce([c * np.log(x) for c, x in zip(model.cs, r)])
            else:
                out = np.full(np.broadcast(*r).shape, float(model.value))
    return model.sign * np.asarray(out, float)


def green_kernel(z: np.ndarray, w: complex, R: float) -> np.ndarray:
    """Green function of the disc ``D(0, R)`` with pole ``w``; 0 outside the disc.

    ``G(z, w) = (1/2pi) log|R^2 - z conj(w)| - (1/2pi) log(R |z - w|)``.
    """
    z = np.asarray(z, complex)
    with np.errstate(divide="ignore"):
        g = (np.log(np.abs(R * R - z * np.conj(w))) - np.log(R * np.abs(z - w))) / (2 * np.pi)
    return np.where(np.abs(z) < R, g, 0.0)


def _green_sum(z: np.ndarray, atoms, R: float) -> np.ndarray:
    out = np.zeros(np.shape(z))
    for w, m in atoms:
        out = out + m * green_kernel(z, complex(w), R)
    return out


def complex_coords(xs: Coords) -> list[np.ndarray]:
    """Complex coordinate arrays from real axis arrays ``(x1, y1, x2, y2, ...)``."""
    return [xs[2 * j] + 1j * xs[2 * j + 1] for j in range(len(xs) // 2)]


def evaluate(model: ModelFunction, point: Sequence[complex]) -> float:
    """Exact value at one point of C^n (``-inf`` allowed)."""
    if len(point) != model.n:
        raise ValueError(f"point needs {model.n} complex coordinates")
    return float(_eval_complex(model, [np.asarray(complex(p)) for p in point]))


def evaluate_array(model: ModelFunction, z: np.ndarray) -> np.ndarray:
    """Vectorized evaluation on complex points of shape ``(..., n)``."""
    z = np.asarray(z, complex)
    return _eval_complex(model, [z[..., j] for j in range(model.n)])


def evaluate_coords(model: ModelFunction, xs: Coords) -> np.ndarray:
    """Evaluation on broadcastable real coordinate arrays (grid convention)."""
    if len(xs) != 2 * model.n:
        raise ValueError("grid dimension does not match the model")
    return _eval_complex(model, complex_coords(xs))


# -- singular sets -------------------------------------------------------------

def singular_mask(model: ModelFunction, spec: GridSpec) -> np.ndarray:
    """Cells whose closed box meets the singular (infinite) set of the model."""
    mask = np.zeros(spec.shape, bool)
    k = model.kind
    ctr = [complex(c) for c in model.center] if model.center else [0j] * model.n
    if k in ("lognorm", "maxlog"):
        p = []
        for c in ctr:
            p += [c.real, c.imag]
        mask |= spec.cell_boxes_containing(p)
    elif k in ("logcoord", "logprod"):
        js = [model.j - 1] if k == "logcoord" else range(model.n)
        for j in js:
            mask |= _hyperplane_mask(spec, j, ctr[j])
    elif k == "green":
        for w, _ in model.atoms:
            w = complex(w) + ctr[0]
            mask |= spec.cell_boxes_containing([w.real, w.imag])
    return mask


def _hyperplane_mask(spec: GridSpec, j: int, c: complex) -> np.ndarray:
    parts = []
    for i in range(spec.N):
        ax = spec.axis(i)
        if i == 2 * j:
            parts.append(np.abs(ax - c.real) <= 0.5 * spec.h[i] * (1 + 1e-12))
        elif i == 2 * j + 1:
            parts.append(np.abs(ax - c.imag) <= 0.5 * spec.h[i] * (1 + 1e-12))
        else:
            parts.append(np.ones(ax.size, bool))
    out = parts[0]
    for p in parts[1:]:
        out = np.logical_and.outer(out, p)
    return out


def sample_model(model: ModelFunction, spec: GridSpec) -> ScalarField:
    """Cell-center samples with the singular cells masked."""
    if spec.N != 2 * model.n:
        raise ValueError("grid dimension does not match the model")
    return sample_field(lambda xs: evaluate_coords(model, xs), spec, mask=singular_mask(model, spec))


# -- certified properties ------------------------------------------------------

def known_properties(model: ModelFunction) -> ModelProperties:
    """Certified analytic data; unknown entries are ``None``."""
    k, n = model.kind, model.n
    pos = model.sign > 0
    if k == "const":
        return ModelProperties(True, True, 1.0, 0.0, None)
    if k == "green":
        # the -(1/2pi) log|z - w| singular part makes it superharmonic in the disc
        return ModelProperties(not pos, pos, None, None, None)
    if not pos:
        return ModelProperties(False, True, model.alpha, None, None)
    if k == "radial":
        return ModelProperties(True, False, model.alpha, 0.0, n * (model.alpha - 2), "radial")
    if k == "sep":
        return ModelProperties(True, False, model.alpha, 0.0, model.alpha - 2, "per-coordinate")
    lelong = {
        "logcoord": model.c,
        "lognorm": model.c,
        "logprod": None if model.c is None else model.c * n,
        "maxlog": min(model.cs) if model.cs else None,
    }[k]
    return ModelProperties(True, False, None, lelong, None)


# -- mollification -------------------------------------------------------------

def bump_kernel(eps: float, h: Sequence[float]) -> np.ndarray:
    """Discretely normalized ``(1 - |x|^2/eps^2)^4`` on the grid offsets."""
    rad = [int(math.floor(eps / hi)) for hi in h]
    axes = [hi * np.arange(-r, r + 1) for r, hi in zip(rad, h)]
    sq = sum(a * a for a in np.meshgrid(*axes, indexing="ij", sparse=True))
    k = np.clip(1 - sq / (eps * eps), 0, None) ** 4
    return k / k.sum()


def _padded_spec(spec: GridSpec, pad: Sequence[int]) -> GridSpec:
    h = spec.h
    return GridSpec(tuple(lo - p * hi for lo, p, hi in zip(spec.lower, pad, h)),
                    tuple(up + p * hi for up, p, hi in zip(spec.upper, pad, h)),
                    tuple(m + 2 * p for m, p in zip(spec.counts, pad)), budget=4 * spec.budget)


def _desingularized(model: ModelFunction, spec: GridSpec) -> np.ndarray:
    """Model samples where singular cells hold their average over 2^N interior points."""
    fld = sample_model(model, spec)
    vals = np.array(fld.values)
    if fld.mask.any():
        idx = np.nonzero(fld.mask)
        centers = np.stack([spec.axis(i)[idx[i]] for i in range(spec.N)], axis=-1)
        acc = np.zeros(len(idx[0]))
        offs = np.array(np.meshgrid(*[[-0.25, 0.25]] * spec.N, indexing="ij")).reshape(spec.N, -1).T
        for o in offs:
            p = centers + o * np.asarray(spec.h)
            acc += evaluate_coords(model, tuple(p[:, i] for i in range(spec.N)))
        vals[idx] = acc / len(offs)
    return vals


def _coordinate_terms(model: ModelFunction):
    """Split additively separable models into per-coordinate terms."""
    if model.kind == "sep":
        a = model.alpha
        return [lambda z, a=a: np.abs(z) ** a] * model.n
    if model.kind == "logprod":
        c = model.c
        return [lambda z, c=c: c * np.log(np.abs(z))] * model.n
    if model.kind == "logcoord":
        terms = [None] * model.n
        c = model.c
        terms[model.j - 1] = lambda z, c=c: c * np.log(np.abs(z))
        return terms
    return None


def mollify(source: ModelFunction | ScalarField, eps: float, spec: GridSpec | None = None) -> ScalarField:
    """Convolution with the normalized radial bump of support radius ``eps``.

    Models are sampled on a padded grid so that the whole grid is convolved
    with true values; fields are padded by edge replication, which only
    affects cells within ``eps`` of the boundary.
    """
    if isinstance(source, ScalarField):
        spec = source.spec
    elif spec is None:
        raise ValueError("mollifying a model needs a target grid")
    if not eps > 0 or eps < 2 * max(spec.h):
        raise ValueError("mollifier under-resolved")
    kern = bump_kernel(eps, spec.h)
    pad = [(s - 1) // 2 for s in kern.shape]
    if isinstance(source, ScalarField):
        big = np.pad(np.asarray(source.values), [(p, p) for p in pad], mode="edge")
        return ScalarField(spec, signal.fftconvolve(big, kern, mode="valid"))
    if source.kind == "const":
        return ScalarField(spec, np.full(spec.shape, source.sign * source.value))
    terms = _coordinate_terms(source) if not source.center else None
    if terms is not None and spec.N > 2:
        return ScalarField(spec, _mollify_separable(source, terms, kern, pad, spec))
    vals = _desingularized(source, _padded_spec(spec, pad))
    return ScalarField(spec, signal.fftconvolve(vals, kern, mode="valid"))


def _mollify_separable(model, terms, kern, pad, spec) -> np.ndarray:
    # the N-dimensional convolution of a function of z_j alone equals the planar
    # convolution with the kernel marginal over the other coordinates
    out = np.zeros(spec.shape)
    for j, term in enumerate(terms):
        if term is None:
            continue
        keep = (2 * j, 2 * j + 1)
        marg = kern.sum(axis=tuple(i for i in range(spec.N) if i not in keep))
        plane = GridSpec(spec.lower[2 * j:2 * j + 2], spec.upper[2 * j:2 * j + 2], spec.counts[2 * j:2 * j + 2])
        pspec = _padded_spec(plane, pad[2 * j:2 * j + 2])
        x, y = pspec.coords()
        with np.errstate(divide="ignore"):
            v = term(x + 1j * y)
        if not np.isfinite(v).all():
            bad = ~np.isfinite(v)
            acc = np.zeros(bad.sum())
            xb, yb = np.broadcast_to(x, v.shape)[bad], np.broadcast_to(y, v.shape)[bad]
            for ox in (-0.25, 0.25):
                for oy in (-0.25, 0.25):
                    acc += term((xb + ox * pspec.h[0]) + 1j * (yb + oy * pspec.h[1]))
            v = np.array(v)
            v[bad] = acc / 4
        conv = signal.fftconvolve(v, marg, mode="valid")
        shape = [1] * spec.N
        shape[2 * j], shape[2 * j + 1] = spec.counts[2 * j], spec.counts[2 * j + 1]
        out = out + conv.reshape(shape)
    return model.sign * out


# -- regularization schedule -------------------------------------------------

@dataclass(frozen=True)
class RegularizationSchedule:
    """``eps(N) = exp(-(1/alpha + c) N)`` with ``0 < c < delta / (n (2 - alpha))``."""

    alpha: float
    c: float
    delta: float
    n: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.c < self.delta / (self.n * (2 - self.alpha)):
            raise ValueError("c must lie in (0, delta / (n (2 - alpha)))")

    def eps(self, N: float) -> float:
        return math.exp(-(1 / self.alpha + self.c) * N)


# -- string grammar ------------------------------------------------------------

def _split_top(s: str, sep: str) -> list[str]:
    out, depth, cur = [], 0, ""
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            out.append(cur)
            cur = ""
        else:
            cur += ch
    out.append(cur)
    return [p.strip() for p in out if p.strip()]


_ATOM = re.compile(r"^\(\s*([^,()]+)\s*,\s*([^,()]+)\s*\)\s*:\s*(\S+)$")


def parse_atoms(s: str) -> list[tuple[tuple[float, float], float]]:
    """Parse ``(x,y):m;(x,y):m`` into planar atoms."""
    out = []
    for part in _split_top(s, ";"):
        m = _ATOM.match(part)
        if not m:
            raise ValueError(f"bad atom {part!r}, expected (x,y):mass")
        out.append(((float(m.group(1)), float(m.group(2))), float(m.group(3))))
    if not out:
        raise ValueError("empty atom list")
    return out


def format_atoms(atoms) -> str:
    return ";".join(f"({_num(p[0])},{_num(p[1])}):{_num(m)}" for p, m in atoms)


def _num(x: float) -> str:
    return repr(float(x))


def parse_model(text: str, n: int | None = None) -> ModelFunction:
    """Parse the compact grammar, e.g. ``radial:alpha=0.5`` or ``neg:logcoord:c=0.3,j=1``."""
    s = text.strip()
    sign = 1
    if s.startswith("neg:"):
        sign, s = -1, s[4:]
    kind, _, rest = s.partition(":")
    kind = kind.strip()
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    params: dict[str, str] = {}
    for item in _split_top(rest, ","):
        key, eq, val = item.partition("=")
        if not eq:
            raise ValueError(f"bad parameter {item!r}")
        params[key.strip()] = val.strip()
    kw: dict = {"sign": sign}
    dim = int(params.pop("n")) if "n" in params else None
    try:
        if "alpha" in params:
            kw["alpha"] = float(params.pop("alpha"))
        if "c" in params:
            if kind == "maxlog":
                kw["cs"] = tuple(float(v) for v in params.pop("c").split(";"))
            else:
                kw["c"] = float(params.pop("c"))
        if "j" in params:
            kw["j"] = int(params.pop("j"))
        if "v" in params:
            kw["value"] = float(params.pop("v"))
        if "R" in params:
            kw["radius"] = float(params.pop("R"))
        if "atoms" in params:
            kw["atoms"] = tuple((complex(*p), m) for p, m in parse_atoms(params.pop("atoms")))
        if "center" in params:
            vals = [float(v) for v in params.pop("center").split(";")]
            kw["center"] = tuple(complex(vals[2 * i], vals[2 * i + 1]) for i in range(len(vals) // 2))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad parameter value in {text!r}: {exc}") from None
    if params:
        raise ValueError(f"unknown parameters {sorted(params)} for {kind}")
    if dim is None:
        dim = n if n is not None else (len(kw["cs"]) if "cs" in kw else 1)
    if kind == "green":
        kw.setdefault("radius", 1.0)
    return ModelFunction(kind, dim, **kw)


def to_string(model: ModelFunction) -> str:
    """Canonical grammar string; ``parse_model(to_string(m)) == m``."""
    parts = []
    if model.alpha is not None:
        parts.append(f"alpha={_num(model.alpha)}")
    if model.kind == "maxlog":
        parts.append("c=" + ";".join(_num(c) for c in model.cs))
    elif model.c is not None:
        parts.append(f"c={_num(model.c)}")
    if model.j is not None:
        parts.append(f"j={model.j}")
    if model.value is not None:
        parts.append(f"v={_num(model.value)}")
    if model.atoms:
        parts.append("atoms=" + format_atoms([((w.real, w.imag), m) for w, m in model.atoms]))
    if model.radius is not None:
        parts.append(f"R={_num(model.radius)}")
    if model.center:
        parts.append("center=" + ";".join(f"{_num(c.real)};{_num(c.imag)}" for c in model.center))
    parts.append(f"n={model.n}")
    head = ("neg:" if model.sign < 0 else "") + model.kind
    return head + ":" + ",".join(parts)
