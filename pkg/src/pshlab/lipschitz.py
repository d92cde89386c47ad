"""Extraction of large sets on which a separately superharmonic function is k-Lipschitz.

Pipeline: threshold the slice maximal functions of the partial gradients at
``c0 k``, prune by relative density along each remaining variable, and
intersect over coordinate orders.  Everything works slice by slice so that
4-D grids never hold more than a few full-size arrays.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import fft as sfft
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .calibration import load_bojarski
from .grid import GridSpec, ScalarField, derivative, fit_loglog_slope
from .zoo import ModelFunction, evaluate_array, evaluate_coords, singular_mask

Source = ScalarField | ModelFunction


@dataclass(frozen=True)
class ExtractionParams:
    """Extraction knobs; ``c0`` defaults to ``1 / (4 C)`` with ``C`` the calibrated Bojarski constant."""

    k: float
    c0: float | None = None
    alpha_d: float = 0.95
    rho: float = 2.0
    per_octave: int = 4
    density_radii: tuple[float, ...] | None = None
    permutations: str = "all"
    center: tuple[complex, ...] | None = None
    radius: float = 1.0

    def __post_init__(self) -> None:
        if not self.k > 0:
            raise ValueError("k must be positive")
        c0 = 1.0 / (4.0 * load_bojarski(2)) if self.c0 is None else float(self.c0)
        if not 0 < c0 <= 1:
            raise ValueError("c0 must lie in (0, 1]")
        object.__setattr__(self, "c0", c0)
        if not 0.5 < self.alpha_d < 1:
            raise ValueError("alpha_d must lie in (1/2, 1)")
        if self.permutations not in ("all", "identity"):
            raise ValueError("permutations must be 'all' or 'identity'")
        if self.rho <= 0 or self.radius <= 0 or self.per_octave < 1:
            raise ValueError("rho, radius and per_octave must be positive")

    def with_k(self, k: float) -> "ExtractionParams":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d["k"] = k
        return ExtractionParams(**d)

    def radii_for(self, h: float) -> tuple[float, ...]:
        """Density radii: the given ones, or dyadic from ``2h`` to ``radius / 2``."""
        if self.density_radii is not None:
            return tuple(self.density_radii)
        out, r = [], 2 * h
        while r <= 0.5 * self.radius * (1 + 1e-12):
            out.append(r)
            r *= 2
        return tuple(out) or (2 * h,)


@dataclass(frozen=True, eq=False)
class DiscreteSet:
    spec: GridSpec
    member: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.member, bool).reshape(self.spec.shape)
        m.flags.writeable = False
        object.__setattr__(self, "member", m)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.member))

    @property
    def measure(self) -> float:
        return self.count * self.spec.cell_volume

    def __and__(self, other: "DiscreteSet") -> "DiscreteSet":
        return DiscreteSet(self.spec, self.member & other.member)

    def __or__(self, other: "DiscreteSet") -> "DiscreteSet":
        return DiscreteSet(self.spec, self.member | other.member)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DiscreteSet) and other.spec == self.spec and np.array_equal(
            other.member, self.member)

    def __hash__(self) -> int:
        return hash((self.spec, self.member.tobytes()))

    def complement_in(self, domain: "DiscreteSet") -> float:
        return float(np.count_nonzero(domain.member & ~self.member)) * self.spec.cell_volume

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "cells": np.argwhere(self.member).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteSet":
        s = d["spec"]
        spec = GridSpec(tuple(s["lower"]), tuple(s["upper"]), tuple(s["counts"]), s.get("budget", 2**26))
        m = np.zeros(spec.shape, bool)
        cells = np.asarray(d["cells"], int).reshape(-1, spec.N)
        m[tuple(cells.T)] = True
        return cls(spec, m)


@dataclass(frozen=True)
class VerifyResult:
    constant: float
    bound: float
    passed: bool
    pairs: int


@dataclass(frozen=True)
class ExtractionReport:
    k: float
    c0: float
    alpha_d: float
    permutations: tuple[tuple[int, ...], ...]
    stages: tuple[tuple[str, float], ...]
    domain_measure: float
    verify: VerifyResult | None
    verdict: str
    notes: dict = field(default_factory=dict)

    @property
    def complement(self) -> float:
        return self.stages[-1][1]


# -- slice machinery -------------------------------------------------------------

def _slice_layout(N: int, j: int) -> tuple[tuple[int, int], list[int]]:
    if N not in (2, 4):
        raise ValueError("only n in {1, 2} is supported")
    if not 0 <= j < N // 2:
        raise ValueError(f"coordinate index {j} out of range")
    sl = (2 * j, 2 * j + 1)
    return sl, [a for a in range(N) if a not in sl]


def _chunks(spec: GridSpec, j: int) -> Iterator[tuple[tuple, tuple[int, ...]]]:
    """Index tuples selecting chunks plus the transpose that puts slice axes last.

    Chunks are full slabs along the first non-slice axis; the transposed chunk
    is a stack ``(S, m, m)`` of complex-line slices.
    """
    sl, rest = _slice_layout(spec.N, j)
    if not rest:
        yield (slice(None), slice(None)), (0, 1)
        return
    c = rest[0]
    reduced = [a for a in range(spec.N) if a != c]
    perm = tuple(reduced.index(a) for a in rest[1:]) + tuple(reduced.index(a) for a in sl)
    for i in range(spec.counts[c]):
        idx = [slice(None)] * spec.N
        idx[c] = i
        yield tuple(idx), perm


def _to_stack(chunk: np.ndarray, perm: tuple[int, ...]) -> np.ndarray:
    t = np.transpose(chunk, perm)
    return t.reshape((-1,) + t.shape[-2:])


def _from_stack(stack: np.ndarray, chunk_shape: tuple[int, ...], perm: tuple[int, ...]) -> np.ndarray:
    t = stack.reshape(tuple(chunk_shape[p] for p in perm))
    return np.transpose(t, np.argsort(perm))


class _ChunkSource:
    """Values and mask of ``F`` on chunks; models are sampled on demand."""

    def __init__(self, F: Source, spec: GridSpec):
        self.F, self.spec = F, spec
        self.sing = None if isinstance(F, ScalarField) else singular_mask(F, spec)

    def __call__(self, idx: tuple) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(self.F, ScalarField):
            return np.asarray(self.F.values[idx]), np.asarray(self.F.mask[idx])
        kept = [a for a, s in enumerate(idx) if not isinstance(s, int)]
        shape = tuple(self.spec.counts[a] for a in kept)
        xs = []
        for a, s in enumerate(idx):
            ax = self.spec.axis(a)
            if isinstance(s, int):
                xs.append(np.full((1,) * len(kept), ax[s]))
            else:
                sh = [1] * len(kept)
                sh[kept.index(a)] = ax.size
                xs.append(ax.reshape(sh))
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.broadcast_to(evaluate_coords(self.F, xs), shape)
        bad = self.sing[idx] | ~np.isfinite(vals)
        return np.where(bad, 0.0, vals), bad


class _Dedup:
    """Groups slices that agree to within ``tol`` (relative), keyed by float32 images."""

    def __init__(self, tol: float = 1e-10):
        self.tol = tol
        self.table: dict[bytes, list[int]] = {}
        self.reps: list[np.ndarray] = []

    def assign(self, stack: np.ndarray, extra: np.ndarray | None = None) -> tuple[np.ndarray, list[int]]:
        owner = np.empty(len(stack), int)
        new = []
        for s, a in enumerate(stack):
            key = a.astype(np.float32).tobytes() + (b"" if extra is None else extra[s].tobytes())
            found = None
            for r in self.table.get(key, []):
                ref = self.reps[r]
                if np.max(np.abs(ref - a), initial=0.0) <= self.tol * (1 + np.max(np.abs(ref), initial=0.0)):
                    found = r
                    break
            if found is None:
                found = len(self.reps)
                self.reps.append(a.copy())
                self.table.setdefault(key, []).append(found)
                new.append(found)
            owner[s] = found
        return owner, new


def _disc_kernel(R: float, pads: tuple[int, int]) -> np.ndarray:
    Ri = int(math.floor(R + 1e-9))
    q0, q1 = min(Ri, pads[0]), min(Ri, pads[1])
    o0, o1 = np.arange(-q0, q0 + 1), np.arange(-q1, q1 + 1)
    return (o0[:, None] ** 2 + o1[None, :] ** 2 <= R * R + 1e-9).astype(float), (q0, q1)


def _stack_disc_sums(stack: np.ndarray, radii_cells: Sequence[float]) -> Iterator[np.ndarray]:
    """Disc sums (zero outside) of each slice of ``stack`` for each radius, by FFT."""
    m0, m1 = stack.shape[1:]
    pads = (m0 - 1, m1 - 1)
    fshape = tuple(sfft.next_fast_len(m + 2 * p, real=True) for m, p in zip((m0, m1), pads))
    S = sfft.rfft2(stack, fshape, axes=(1, 2))
    for R in radii_cells:
        kern, (q0, q1) = _disc_kernel(R, pads)
        full = sfft.irfft2(S * sfft.rfft2(kern, fshape), fshape, axes=(1, 2))
        yield full[:, q0:q0 + m0, q1:q1 + m1]


def _centered_maximal_stack(g: np.ndarray, valid: np.ndarray, radii_cells: Sequence[float],
                            batch: int = 64) -> np.ndarray:
    out = np.empty(g.shape)
    for b in range(0, len(g), batch):
        gb = np.where(valid[b:b + batch], g[b:b + batch], 0.0)
        cb = valid[b:b + batch].astype(float)
        best = np.full(gb.shape, -np.inf)
        for s, c in zip(_stack_disc_sums(gb, radii_cells), _stack_disc_sums(cb, radii_cells)):
            c = np.rint(c)
            with np.errstate(invalid="ignore", divide="ignore"):
                np.maximum(best, np.where(c > 0, np.maximum(s, 0.0) / c, -np.inf), out=best)
        out[b:b + batch] = best
    return out


# -- operations ----------------------------------------------------------------------

def partial_maximal_fields(F: Source, spec: GridSpec | None = None, rho: float = 2.0,
                           per_octave: int = 4) -> list[ScalarField]:
    """Slice maximal functions ``M_j(z) = sup_{r <= rho} avg_{D(z_j, r)} |grad_j F|``.

    The average runs over the slice through ``z`` (other coordinates frozen),
    truncated by the box.  Radii are ``(h/2) 2^(i / per_octave)`` up to ``rho``;
    the smallest is the single cell.  Slices agreeing to within 1e-10
    (relative) share one maximal computation.
    """
    spec = F.spec if isinstance(F, ScalarField) else spec
    if spec is None:
        raise ValueError("a model needs a grid")
    n = spec.n
    if isinstance(F, ModelFunction) and F.n != n:
        raise ValueError("model and grid dimensions differ")
    out = []
    for j in range(n):
        sl, _ = _slice_layout(spec.N, j)
        h0, h1 = spec.h[sl[0]], spec.h[sl[1]]
        if not np.isclose(h0, h1, rtol=1e-9):
            raise ValueError("slices need square cells")
        count = int(math.floor(per_octave * math.log2(rho / (h0 / 2)) + 1e-9)) + 1
        radii_cells = 0.5 * 2.0 ** (np.arange(count) / per_octave)
        vals = np.empty(spec.shape)
        mask = np.zeros(spec.shape, bool)
        dedup = _Dedup()
        results: dict[int, np.ndarray] = {}
        source = _ChunkSource(F, spec)
        for idx, perm in _chunks(spec, j):
            fv, fm = source(idx)
            fs, ms = _to_stack(fv, perm), _to_stack(fm, perm)
            g = np.sqrt(derivative(fs, h0, 1) ** 2 + derivative(fs, h1, 2) ** 2)
            bad = ms.copy()
            if ms.any():
                for ax in (1, 2):
                    for sh in (1, -1):
                        bad |= np.roll(ms, sh, axis=ax) & _roll_valid(ms.shape, sh, ax)
            g = np.where(bad, 0.0, g)
            owner, new = dedup.assign(g, bad)
            if new:
                reps = np.stack([dedup.reps[r] for r in new])
                firsts = {o: s for s, o in reversed(list(enumerate(owner)))}
                valid = np.stack([~bad[firsts[r]] for r in new])
                for r, m in zip(new, _centered_maximal_stack(reps, valid, radii_cells)):
                    results[r] = m
            res = np.stack([results[o] for o in owner])
            vals[idx] = _from_stack(res, fv.shape, perm)
            mask[idx] = _from_stack(bad | ~np.isfinite(res), fv.shape, perm)
        out.append(ScalarField(spec, np.where(mask, 0.0, vals), mask))
    return out


def _roll_valid(shape: tuple[int, ...], sh: int, ax: int) -> np.ndarray:
    """Excludes the wrapped row of ``np.roll``."""
    ok = np.ones(shape[ax], bool)
    ok[0 if sh > 0 else -1] = False
    s = [1] * len(shape)
    s[ax] = shape[ax]
    return ok.reshape(s)


def build_candidate_set(fields: Sequence[ScalarField], k: float, c0: float) -> DiscreteSet:
    """``B_1``: cells where every slice maximal field is at most ``c0 k`` (masked cells excluded)."""
    spec = fields[0].spec
    m = np.ones(spec.shape, bool)
    for f in fields:
        m &= (f.values <= c0 * k) & ~f.mask
    return DiscreteSet(spec, m)


def polydisc(spec: GridSpec, center: Sequence[complex] | None = None, radius: float = 1.0) -> DiscreteSet:
    """Cells whose centers satisfy ``|z_j - a_j| < radius`` for every ``j``."""
    n = spec.n
    a = [0j] * n if center is None else [complex(c) for c in center]
    xs = spec.coords()
    m = np.ones(spec.shape, bool)
    for j in range(n):
        m &= (xs[2 * j] - a[j].real) ** 2 + (xs[2 * j + 1] - a[j].imag) ** 2 < radius**2
    return DiscreteSet(spec, m)


def density_filter(S: DiscreteSet, j: int, alpha_d: float, radii: Sequence[float],
                   domain: DiscreteSet | None = None) -> DiscreteSet:
    """Keep cells of ``S`` whose ``j``-slice section has relative density ``>= alpha_d`` at every radius.

    Density at ``z`` and radius ``r`` is ``#(S & D & disc) / #(D & disc)`` with
    ``disc`` the discrete disc ``D(z_j, r)`` in the slice and ``D`` the domain.
    ``j`` is 0-based.
    """
    spec = S.spec
    sl, _ = _slice_layout(spec.N, j)
    h = spec.h[sl[0]]
    dom = np.ones(spec.shape, bool) if domain is None else domain.member
    radii_cells = [r / h for r in radii]
    out = np.zeros(spec.shape, bool)
    cache: dict[bytes, np.ndarray] = {}
    for idx, perm in _chunks(spec, j):
        a = _to_stack(S.member[idx] & dom[idx], perm)
        d = _to_stack(dom[idx], perm)
        keys = [x.tobytes() + y.tobytes() for x, y in zip(a, d)]
        first: dict[bytes, int] = {}
        for i, kk in enumerate(keys):
            if kk not in cache:
                first.setdefault(kk, i)
        uniq = list(first)
        if uniq:
            A = np.stack([a[first[kk]] for kk in uniq]).astype(float)
            D = np.stack([d[first[kk]] for kk in uniq]).astype(float)
            keep = A > 0
            for num, den in zip(_stack_disc_sums(A, radii_cells), _stack_disc_sums(D, radii_cells)):
                keep &= np.rint(num) >= alpha_d * np.rint(den) - 1e-9
            for kk, kp in zip(uniq, keep):
                cache[kk] = kp
        res = np.stack([cache[kk] for kk in keys])
        out[idx] = _from_stack(res, S.member[idx].shape, perm)
    return DiscreteSet(spec, out & S.member)


def _values_at(F: Source, spec: GridSpec, cells: np.ndarray) -> np.ndarray:
    if isinstance(F, ScalarField):
        return np.asarray(F.values)[tuple(cells.T)]
    pts = np.asarray(spec.lower) + (cells + 0.5) * np.asarray(spec.h)
    z = pts[:, 0::2] + 1j * pts[:, 1::2]
    return evaluate_array(F, z)


def verify_extraction(F: Source, L: DiscreteSet, k: float, budget: int = 10_000, seed: int = 42,
                      bound: float | None = None) -> VerifyResult:
    """Empirical Lipschitz constant of ``F`` on ``L``.

    Checks every pair of adjacent cells of ``L`` and ``budget`` seeded random
    pairs (every pair when ``L`` has at most 3000 cells).  Passes iff the
    constant is at most ``bound`` (default ``2 n! n k``).
    """
    spec = L.spec
    n = spec.n
    bound = 2 * math.factorial(n) * n * k if bound is None else bound
    cnt = L.count
    if cnt < 2:
        return VerifyResult(0.0, bound, True, 0)
    best, pairs = 0.0, 0
    # adjacent pairs, one slab at a time along axis 0
    prev_v = prev_m = None
    source = _ChunkSource(F, spec) if isinstance(F, ModelFunction) else None
    for i in range(spec.counts[0]):
        idx = (i,) + (slice(None),) * (spec.N - 1)
        m = L.member[idx]
        if isinstance(F, ScalarField):
            v = np.asarray(F.values[idx])
        else:
            v = source(idx)[0]
        for ax in range(m.ndim):
            a = [slice(None)] * m.ndim
            b = [slice(None)] * m.ndim
            a[ax], b[ax] = slice(1, None), slice(None, -1)
            both = m[tuple(a)] & m[tuple(b)]
            if both.any():
                d = np.abs(v[tuple(a)] - v[tuple(b)])[both] / spec.h[ax + 1]
                best = max(best, float(d.max()))
                pairs += int(both.sum())
        if prev_m is not None:
            both = m & prev_m
            if both.any():
                best = max(best, float((np.abs(v - prev_v)[both] / spec.h[0]).max()))
                pairs += int(both.sum())
        prev_v, prev_m = v, m
    rng = np.random.default_rng(seed)
    if cnt <= 3000:
        cells = np.argwhere(L.member)
        iu, ju = np.triu_indices(len(cells), 1)
        ca, cb = cells[iu], cells[ju]
    else:
        flat = np.flatnonzero if L.member.size <= 2**24 else None
        if flat is not None:
            pool = flat(L.member)
            pick = pool[rng.integers(len(pool), size=(budget, 2))]
        else:
            pick = _rejection_sample(L.member, rng, budget)
        ca = np.stack(np.unravel_index(pick[:, 0], spec.shape), 1)
        cb = np.stack(np.unravel_index(pick[:, 1], spec.shape), 1)
        keep = np.any(ca != cb, axis=1)
        ca, cb = ca[keep], cb[keep]
    if len(ca):
        fa, fb = _values_at(F, spec, ca), _values_at(F, spec, cb)
        dist = np.linalg.norm((ca - cb) * np.asarray(spec.h), axis=1)
        best = max(best, float(np.max(np.abs(fa - fb) / dist)))
        pairs += len(ca)
    return VerifyResult(best, bound, best <= bound, pairs)


def _rejection_sample(member: np.ndarray, rng: np.random.Generator, budget: int) -> np.ndarray:
    flat = member.reshape(-1)
    got = []
    need = 2 * budget
    while need > 0:
        c = rng.integers(flat.size, size=4 * need)
        c = c[flat[c]][:need]
        got.append(c)
        need -= len(c)
    return np.concatenate(got).reshape(budget, 2)


def _orders(n: int, policy: str) -> list[tuple[int, ...]]:
    if policy == "identity":
        return [tuple(range(n))]
    return list(itertools.permutations(range(n)))


def extract_lipschitz_set(F: Source, params: ExtractionParams, spec: GridSpec | None = None,
                          fields: Sequence[ScalarField] | None = None, verify: bool = True,
                          budget: int = 10_000, seed: int = 42) -> tuple[DiscreteSet, ExtractionReport]:
    """Run the threshold / density / intersection pipeline on the polydisc of the params.

    ``fields`` may carry precomputed :func:`partial_maximal_fields` so a
    k-sweep computes them once.
    """
    spec = F.spec if isinstance(F, ScalarField) else spec
    if spec is None:
        raise ValueError("a model needs a grid")
    n = spec.n
    dom = polydisc(spec, params.center, params.radius)
    if isinstance(F, ScalarField):
        dom = DiscreteSet(spec, dom.member & ~F.mask)
    if fields is None:
        fields = partial_maximal_fields(F, spec, params.rho, params.per_octave)
    B1 = build_candidate_set(fields, params.k, params.c0) & dom
    stages = [("B1", B1.complement_in(dom))]
    orders = _orders(n, params.permutations)
    L = B1
    for order in orders:
        B = B1
        for p, j in enumerate(order[1:], start=2):
            B = density_filter(B, j, params.alpha_d, params.radii_for(spec.h[2 * j]), dom)
            stages.append((f"B{p}[{','.join(str(o + 1) for o in order)}]", B.complement_in(dom)))
        L = L & B
    stages.append(("L", L.complement_in(dom)))
    res = None
    if L.count == 0:
        verdict = "empty (k too small)"
    elif verify:
        res = verify_extraction(F, L, params.k, budget, seed)
        verdict = "pass" if res.passed else "fail"
    else:
        verdict = "unverified"
    notes = {"permutation_policy": params.permutations}
    if params.permutations == "identity" and n > 1:
        notes["warning"] = "identity order only; the Lipschitz claim needs every order"
    report = ExtractionReport(params.k, params.c0, params.alpha_d, tuple(orders), tuple(stages),
                              dom.measure, res, verdict, notes)
    return L, report


def complement_law(F: Source, params: ExtractionParams, ks: Sequence[float], spec: GridSpec | None = None,
                   verify: bool = True) -> tuple[list[ExtractionReport], float, float]:
    """Extraction over a k-sweep; returns reports, the log-log slope and ``C`` in ``|w \\ L| ~ C / k^2``."""
    spec = F.spec if isinstance(F, ScalarField) else spec
    fields = partial_maximal_fields(F, spec, params.rho, params.per_octave)
    reports = [extract_lipschitz_set(F, params.with_k(k), spec, fields, verify)[1] for k in ks]
    comp = [r.complement for r in reports]
    fit = fit_loglog_slope(list(zip(ks, comp)))
    C = math.exp(np.mean([math.log(c * k * k) for c, k in zip(comp, ks)]))
    return reports, fit.slope, C


def glue_sets(parts: Sequence[tuple[Sequence[complex], float, DiscreteSet]], k: float) -> tuple[DiscreteSet, float]:
    """Union of per-polydisc sets restricted to ``D(a_j, r)``, with effective constant ``2 n l k``."""
    if not parts:
        raise ValueError("no polydiscs")
    spec = parts[0][2].spec
    r = parts[0][1]
    if any(p[2].spec != spec for p in parts):
        raise ValueError("sets live on different grids")
    if any(not math.isclose(p[1], r) for p in parts):
        raise ValueError("polydiscs must have equal radius")
    ell = len(parts)
    adj = np.zeros((ell, ell), bool)
    for a in range(ell):
        for b in range(ell):
            adj[a, b] = all(abs(complex(x) - complex(y)) < 2 * r for x, y in zip(parts[a][0], parts[b][0]))
    ncomp, labels = connected_components(csr_matrix(adj), directed=False)
    if ncomp > 1:
        groups = [[i for i in range(ell) if labels[i] == c] for c in range(ncomp)]
        raise ValueError(f"disconnected union: components {groups}")
    m = np.zeros(spec.shape, bool)
    for center, rad, S in parts:
        m |= S.member & polydisc(spec, center, rad).member
    eff = k if ell == 1 else 2 * spec.n * ell * k
    return DiscreteSet(spec, m), eff
