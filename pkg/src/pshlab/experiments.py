"""Named experiments: validated configurations and the pipelines behind each CLI subcommand."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import calibration
from .grid import DEFAULT_BUDGET, GridSpec, atoms_measure, fit_line, fit_loglog_slope, sample_field
from .lelong import estimate_lelong, sublevel_decay
from .lipschitz import ExtractionParams, extract_lipschitz_set, partial_maximal_fields
from .maximal import (MaximalParams, RieszParams, calibrate_bojarski, hl_maximal, maximal_riesz, riesz_potential,
                      weak_type_profile)
from .monge_ampere import (CutoffSpec, MAContext, calibrate_kappa, classify_convergence, predicted_convergence,
                           skoda_integral_profile, verify_ibp_identity)
from .potential1d import DiscDomain, lipschitz_sets_1d
from .report import ExperimentReport, LogLogPlot, Quantity, emit_report, table_from_records
from .zoo import ModelFunction, known_properties, mollify, parse_atoms, parse_model, sample_model

# derived weak-type constants for a unit atom in R^2
HL_DIRAC_CONSTANT = 4.0
MAXIMAL_RIESZ_CONSTANT = 8.634 * math.pi


class ConfigError(ValueError):
    """A configuration violates a precondition of the target pipeline."""


# -- parameter parsing -----------------------------------------------------------------

def _float(v) -> float:
    return float(v)


def _int(v) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _split(v) -> list[str]:
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [s for s in str(v).replace(" ", "").split(",") if s]


def _floats(v) -> tuple[float, ...]:
    return tuple(float(s) for s in _split(v))


def _ints(v) -> tuple[int, ...]:
    if isinstance(v, str) and ".." in v:
        a, b = v.split("..")
        return tuple(range(int(a), int(b) + 1))
    return tuple(_int(s) for s in _split(v))


def _dyadic(v) -> tuple[float, ...]:
    """``"4..256"`` gives the powers of two in the range; a list is taken as is."""
    if isinstance(v, str) and ".." in v:
        a, b = (float(s) for s in v.split(".."))
        if not 0 < a <= b:
            raise ValueError("need 0 < lower <= upper")
        lo, hi = math.ceil(math.log2(a) - 1e-12), math.floor(math.log2(b) + 1e-12)
        return tuple(2.0**k for k in range(lo, hi + 1))
    return _floats(v)


def _text(v) -> str:
    return str(v).strip()


def _model(v) -> str:
    s = str(v).strip()
    if not s.startswith("quad"):
        parse_model(s)
    return s


def _atoms(v) -> str:
    s = str(v).strip()
    if s and s.lower() != "none":
        parse_atoms(s)
    return s


def _choice(*opts: str) -> Callable:
    def parse(v):
        s = str(v).strip()
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s
    return parse


def _optional(parse: Callable) -> Callable:
    def inner(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none", "auto")):
            return None
        return parse(v)
    return inner


@dataclass(frozen=True)
class Param:
    name: str
    parse: Callable
    default: object = None
    help: str = ""
    required: bool = False


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


# -- configuration ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """An experiment name, its validated parameters and the output directory."""

    experiment: str
    params: Mapping
    output: str = "."

    @classmethod
    def build(cls, experiment: str, values: Mapping | None = None, output: str = ".") -> "ExperimentConfig":
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        table = {p.name: p for p in EXPERIMENTS[experiment].params}
        values = {k.replace("-", "_"): v for k, v in (values or {}).items()}
        unknown = sorted(set(values) - set(table))
        if unknown:
            raise ConfigError(f"{experiment}: unknown parameters {unknown}")
        params = {}
        for name, p in table.items():
            raw = values.get(name, p.default)
            if raw is None:
                if p.required:
                    raise ConfigError(f"{experiment}: parameter {name!r} is required")
                params[name] = None
                continue
            try:
                params[name] = p.parse(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{experiment}: invalid {name} = {raw!r}: {exc}") from None
        check = EXPERIMENTS[experiment].check
        if check is not None:
            try:
                check(params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{experiment}: {exc}") from None
        return cls(experiment, params, str(output))

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "params": {k: _jsonable(v) for k, v in sorted(self.params.items())},
                "output": self.output}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        return cls.build(d["experiment"], d.get("params", {}), d.get("output", "."))


@dataclass(frozen=True)
class Experiment:
    params: tuple[Param, ...]
    run: Callable[[dict], ExperimentReport]
    check: Callable[[dict], None] | None
    help: str


def run_experiment(config: ExperimentConfig, formats=("json", "csv", "svg")) -> ExperimentReport:
    """Dispatch to the named pipeline, time it and write the requested formats to ``config.output``."""
    t0 = time.perf_counter()
    report = EXPERIMENTS[config.experiment].run(dict(config.params))
    report.experiment = config.experiment
    report.config = config.to_dict()
    report.wall_clock = time.perf_counter() - t0
    emit_report(report, formats, config.output)
    return report


def _report(quantities, tables, outcome, verdict, notes=(), plots=(), images=None) -> ExperimentReport:
    return ExperimentReport("", {}, dict(quantities), dict(tables), outcome, verdict, list(notes),
                            plots=list(plots), images=dict(images or {}))


def _dim(text: str, n: int | None) -> ModelFunction:
    return parse_model(text, n)


# -- lelong -----------------------------------------------------------------------------

def _check_lelong(p):
    _dim(p["phi"], p["n"])


def _run_lelong(p) -> ExperimentReport:
    model = _dim(p["phi"], p["n"])
    est = estimate_lelong(model)
    ref = known_properties(model).lelong
    q = Quantity(est.value, p["tolerance"], ref)
    verdict = "inconclusive" if ref is None else "pass" if q.within() else "fail"
    table = table_from_records(("r", "sup"), zip(est.radii, est.sups))
    return _report({"lelong": q, "r_squared": Quantity(est.r_squared, None)}, {"sups": table},
                   f"lelong number {est.value:.4f}", verdict)


# -- decay ------------------------------------------------------------------------------

def _check_decay(p):
    phi = _dim(p["phi"], p["n"])
    if p["u"] is not None:
        MAContext(phi.n, _dim(p["u"], phi.n))
    if any(b <= a for a, b in zip(p["thresholds"], p["thresholds"][1:])) or len(p["thresholds"]) < 3:
        raise ValueError("thresholds must increase, at least 3")


def _run_decay(p) -> ExperimentReport:
    phi = _dim(p["phi"], p["n"])
    n = phi.n
    res = p["resolution"] or (256 if n == 1 else 40)
    spec = GridSpec.cube(p["half_width"], res, 2 * n)
    mu, exact = None, None
    nu = known_properties(phi).lelong
    plain = phi.kind == "lognorm" and not phi.center and phi.sign > 0
    if p["u"] is not None:
        u = _dim(p["u"], n)
        mu = MAContext(n, u)
        if plain and u.kind == "radial" and not u.center:
            exact = n * u.alpha / phi.c
    elif plain:
        exact = 2 * n / phi.c
    fit = sublevel_decay(phi, mu=mu, thresholds=p["thresholds"], spec=spec)
    quantities = {}
    plots = []
    if fit.gamma is not None:
        quantities["rate"] = Quantity(fit.gamma, None if exact is None else p["tolerance"] * exact, exact)
        pos = [(M, m) for M, m in zip(fit.thresholds, fit.masses) if m > 0]
        line = fit_line([a for a, _ in pos], [math.log(b) for _, b in pos])
        plots.append(LogLogPlot("masses", "M", "mass", line.slope, line.intercept, semilog=True,
                                title=f"decay: rate {fit.gamma:.3f}"))
    if fit.gamma_ref is not None:
        quantities["lemma_bound"] = Quantity(fit.gamma_ref, p["tolerance"] * fit.gamma_ref)
    if fit.verdict == "insufficient resolution":
        verdict = "inconclusive"
    elif fit.verdict == "fail" or (exact is not None and not quantities["rate"].within()):
        verdict = "fail"
    elif fit.verdict == "pass" or exact is not None:
        verdict = "pass"
    else:
        verdict = "inconclusive"
    if nu is None:
        notes = ["no catalog Lelong number; the lemma bound is not checked"]
    else:
        notes = []
    outcome = fit.verdict if fit.gamma is None else f"rate {fit.gamma:.4f}"
    return _report(quantities, {"masses": table_from_records(("M", "mass"), zip(fit.thresholds, fit.masses))},
                   outcome, verdict, notes, plots)


# -- skoda ------------------------------------------------------------------------------

def _check_skoda(p):
    u = _dim(p["u"], p["n"])
    phi = _dim(p["phi"], p["n"])
    if phi.n != u.n:
        raise ValueError("phi and u have different dimensions")
    MAContext(u.n, u, p["representation"])
    if len(p["k_range"]) < 4:
        raise ValueError("k_range needs at least 4 annuli")


def _skoda_reference(phi: ModelFunction, u: ModelFunction) -> float | None:
    """Exact decay exponent of ``I_k`` where the integrand is an explicit power."""
    if phi.sign < 0 or phi.center or u.center:
        return None
    if u.kind == "radial" and phi.kind == "lognorm":
        return u.n * u.alpha - phi.c
    if u.kind == "sep" and phi.kind == "logcoord":
        return u.alpha - phi.c
    return None


def _run_skoda(p) -> ExperimentReport:
    u = _dim(p["u"], p["n"])
    phi = _dim(p["phi"], u.n)
    ctx = MAContext(u.n, u, p["representation"])
    prof = skoda_integral_profile(phi, ctx, p["k_range"], cells=p["resolution"])
    table = table_from_records(("k", "I_k", "resolution", "clipped_fraction", "valid"),
                               [(a.k, a.value, a.resolution, a.clipped_fraction, int(a.valid)) for a in prof])
    try:
        v = classify_convergence(prof, threshold=p["threshold"])
    except ValueError as exc:
        return _report({}, {"profile": table}, "inconclusive", "inconclusive", [str(exc)])
    ref = _skoda_reference(phi, u)
    pred = predicted_convergence(phi, u)
    q = Quantity(v.exponent, p["exponent_tol"] if ref is not None else None, ref)
    if v.verdict == "inconclusive":
        verdict = "inconclusive"
    elif pred is None:
        verdict = "inconclusive"
    else:
        agrees = (v.verdict == "converges") == pred
        verdict = "pass" if agrees and (ref is None or q.within()) else "fail"
    notes = [] if pred is not None else ["no exact or sufficient convergence criterion for this pair"]
    ks = [a.k for a in prof if a.valid]
    plots = [LogLogPlot("profile", "k", "I_k", -v.exponent * math.log(2), v.fit.intercept, semilog=True,
                        title=f"skoda: exponent {v.exponent:.3f}")] if ks else []
    return _report({"exponent": q}, {"profile": table}, v.verdict, verdict, notes, plots)


# -- maximal ----------------------------------------------------------------------------

def _check_maximal(p):
    atoms = parse_atoms(p["measure"])
    if p["operator"] != "hl" and not 0 < p["alpha"] < 2:
        raise ValueError("alpha must lie in (0, 2) for N = 2")
    if p["mode"] == "local" and p["rho"] is None:
        raise ValueError("local mode needs rho")
    h = p["half_width"]
    if any(max(abs(x), abs(y)) >= h for (x, y), _ in atoms):
        raise ValueError("atoms must lie inside the grid")


def _run_maximal(p) -> ExperimentReport:
    atoms = parse_atoms(p["measure"])
    h = p["half_width"]
    spec = GridSpec.cube(h, p["resolution"], 2)
    mu = atoms_measure(spec, atoms)
    op, alpha = p["operator"], p["alpha"]
    mp = MaximalParams(mode="local", rho=p["rho"]) if p["mode"] == "local" else MaximalParams(r_max=h)
    if op == "hl":
        fld, power = hl_maximal(mu, mp), 1.0
    elif op == "riesz":
        fld, power = riesz_potential(mu, RieszParams(alpha)), 2 / (2 - alpha)
    else:
        fld, power = maximal_riesz(mu, RieszParams(alpha), mp), 2 / (2 - alpha)
    w = weak_type_profile(fld, power, p["t_range"], strict=op == "hl")
    ref, tol = None, None
    if len(atoms) == 1 and p["mode"] == "global":
        m = atoms[0][1]
        if op == "hl":
            ref, tol = HL_DIRAC_CONSTANT * m, 0.15
        elif op == "riesz":
            ref, tol = math.pi * m**power, 0.05
        elif alpha == 1.0:
            ref, tol = MAXIMAL_RIESZ_CONSTANT * m**power, 0.10
    sup = max((q for q, ok in zip(w.products, w.resolved) if ok), default=None)
    quantity = Quantity(sup, None if ref is None else tol * ref, ref)
    if sup is None:
        verdict, outcome = "inconclusive", "no threshold resolved"
    else:
        verdict = "inconclusive" if ref is None else "pass" if quantity.within() else "fail"
        outcome = f"sup {sup:.4f}"
    table = table_from_records(("t", "superlevel_measure", "product", "resolved"),
                               [(t, a, q, int(ok)) for t, a, q, ok in
                                zip(w.thresholds, w.measures, w.products, w.resolved)])
    pts = [(t, a) for t, a, ok in zip(w.thresholds, w.measures, w.resolved) if ok and a > 0]
    plots = []
    if len(pts) >= 3:
        fit = fit_loglog_slope(pts)
        plots.append(LogLogPlot("profile", "t", "superlevel_measure", fit.slope, fit.intercept,
                                title=f"{op}: weak type p = {power:.3g}"))
    return _report({"weak_type_sup": quantity, "exponent": Quantity(power, 0.0, power)}, {"profile": table},
                   outcome, verdict, [] if ref is not None else ["no derived constant for this measure"], plots)


# -- lipschitz --------------------------------------------------------------------------

def _lipschitz_model(p) -> ModelFunction:
    if (p["F"] is None) == (p["phi"] is None):
        raise ValueError("give exactly one of F (superharmonic) or phi (plurisubharmonic, negated)")
    if p["F"] is not None:
        return _dim(p["F"], p["n"])
    m = _dim(p["phi"], p["n"])
    return dataclasses.replace(m, sign=-m.sign)


def _check_lipschitz(p):
    m = _lipschitz_model(p)
    if m.n > 2:
        raise ValueError("the extraction runs for n = 1 or 2")
    ExtractionParams(k=p["k"][0], c0=p["c0"], alpha_d=p["alpha_d"], permutations=p["permutations"],
                     radius=p["radius"])
    if any(k <= 0 for k in p["k"]):
        raise ValueError("k must be positive")


def _run_lipschitz(p) -> ExperimentReport:
    F = _lipschitz_model(p)
    n = F.n
    res = p["resolution"] or (512 if n == 1 else 96)
    spec = GridSpec.cube(p["half_width"], res, 2 * n, budget=max(DEFAULT_BUDGET, res ** (2 * n)))
    params = ExtractionParams(k=p["k"][0], c0=p["c0"], alpha_d=p["alpha_d"], permutations=p["permutations"],
                              radius=p["radius"])
    fields = partial_maximal_fields(F, spec, params.rho, params.per_octave)
    stages, law, images = [], [], {}
    reports = []
    for k in p["k"]:
        L, rep = extract_lipschitz_set(F, params.with_k(k), spec, fields, verify=True, seed=p["seed"])
        reports.append(rep)
        stages += [(k, name, m) for name, m in rep.stages]
        v = rep.verify
        law.append((k, rep.complement, rep.complement * k * k, None if v is None else v.constant,
                    None if v is None else v.bound, rep.verdict))
        if n == 1 and k == p["k"][-1]:
            images[f"L_k{k:g}"] = (L.member.astype(float), (spec.lower[0], spec.upper[0], spec.lower[1],
                                                           spec.upper[1]))
    quantities = {"c0": Quantity(reports[0].c0, 0.0, reports[0].c0)}
    tables = {"stages": table_from_records(("k", "stage", "complement_measure"), stages),
              "law": table_from_records(("k", "complement", "complement_k2", "verify_constant", "verify_bound",
                                         "verdict"), law)}
    pts = [(k, r.complement) for k, r in zip(p["k"], reports) if r.complement > 0]
    verified = all(r.verify is None or r.verify.passed for r in reports)
    plots = []
    if len(pts) >= 3:
        fit = fit_loglog_slope(pts)
        quantities["slope"] = Quantity(fit.slope, p["slope_tol"], -2.0)
        ck = [c * k * k for k, c in pts]
        C = math.exp(float(np.mean(np.log(ck))))
        quantities["C"] = Quantity(C, (max(ck) - min(ck)) / 2)
        plots.append(LogLogPlot("law", "k", "complement", fit.slope, fit.intercept,
                                title=f"lipschitz n={n}: slope {fit.slope:.3f}"))
        verdict = "pass" if quantities["slope"].within() and verified else "fail"
        outcome = f"slope {fit.slope:.4f}"
    else:
        verdict, outcome = "inconclusive", "too few nonzero complements"
    notes = [] if verified else ["verify_extraction failed for some k"]
    return _report(quantities, tables, outcome, verdict, notes, plots, images)


# -- potential1d ------------------------------------------------------------------------

def _p1_atoms(text: str) -> list:
    if not text or text.lower() == "none":
        return []
    return [(complex(x, y), m) for (x, y), m in parse_atoms(text)]


def _check_potential1d(p):
    dom = DiscDomain(0j, p["radius"])
    if not 0 < p["K_radius"] < dom.radius:
        raise ValueError("K_radius must lie in (0, radius)")
    for w, m in _p1_atoms(p["atoms"]):
        if abs(w) >= dom.radius:
            raise ValueError(f"atom {w} is not inside the disc")
        if not m > 0:
            raise ValueError("atom masses must be positive")
    if any(k <= 0 for k in p["k"]):
        raise ValueError("k must be positive")


def _run_potential1d(p) -> ExperimentReport:
    atoms = _p1_atoms(p["atoms"])
    out = lipschitz_sets_1d(atoms, p["k"], DiscDomain(0j, p["radius"]), K_radius=p["K_radius"],
                            count=p["resolution"])
    rows = [(e.k, e.threshold, e.complement, e.normalized, None if e.verify is None else e.verify.constant)
            for _, e in out]
    table = table_from_records(("k", "threshold", "complement", "normalized", "verify_constant"), rows)
    if not atoms:
        return _report({"complement": Quantity(0.0, 0.0, 0.0)}, {"law": table}, "L = K", "pass")
    quantities = {}
    pts = [(e.k, e.complement) for _, e in out if e.complement > 0]
    norm = [e.normalized for _, e in out if e.complement > 0]
    ratios = [e.verify.constant / e.k for _, e in out if e.verify is not None]
    if ratios:
        quantities["verify_over_k"] = Quantity(max(ratios), 2.0, 0.0)
    plots = []
    if len(pts) >= 3:
        fit = fit_loglog_slope(pts)
        quantities["slope"] = Quantity(fit.slope, p["slope_tol"], -2.0)
        quantities["normalized_spread"] = Quantity(max(norm) / min(norm), p["spread"] - 1, 1.0)
        plots.append(LogLogPlot("law", "k", "complement", fit.slope, fit.intercept,
                                title=f"potential1d: slope {fit.slope:.3f}"))
        ok = all(q.within() for q in quantities.values())
        verdict, outcome = ("pass" if ok else "fail"), f"slope {fit.slope:.4f}"
    else:
        verdict, outcome = "inconclusive", "too few nonzero complements"
    return _report(quantities, {"law": table}, outcome, verdict, plots=plots)


# -- ibp --------------------------------------------------------------------------------

def _quad(text: str, n: int) -> Callable:
    """``quad`` is ``|z|^2``; ``quad:j=1`` is ``|z_j|^2``."""
    _, _, rest = text.partition(":")
    axes = range(n)
    if rest:
        key, _, val = rest.partition("=")
        if key.strip() != "j" or not 1 <= int(val) <= n:
            raise ValueError(f"bad quadratic {text!r}")
        axes = [int(val) - 1]
    return lambda xs: sum(xs[2 * j] ** 2 + xs[2 * j + 1] ** 2 for j in axes)


def _smooth_input(text: str, n: int, spec: GridSpec, eps: float):
    if text.startswith("quad"):
        return sample_field(_quad(text, n), spec)
    model = parse_model(text, n)
    if model.kind == "const" or eps == 0:
        return sample_model(model, spec)
    return mollify(model, eps, spec)


def _check_ibp(p):
    if p["n"] not in (1, 2):
        raise ValueError("n must be 1 or 2")
    for key in ("u", "phi"):
        if p[key].startswith("quad"):
            _quad(p[key], p["n"])
        else:
            _dim(p[key], p["n"])
    CutoffSpec(p["inner"], p["outer"])
    if p["resolution"] is not None and any(b <= a for a, b in zip(p["resolution"], p["resolution"][1:])):
        raise ValueError("resolutions must increase")


def _run_ibp(p) -> ExperimentReport:
    n = p["n"]
    ms = p["resolution"] or ((256, 512) if n == 1 else (48, 64))
    tol = p["tolerance"] if p["tolerance"] is not None else (1e-3 if n == 1 else 5e-2)
    cut = CutoffSpec(p["inner"], p["outer"])
    rows = []
    for m in ms:
        spec = GridSpec.cube(p["half_width"], m, 2 * n)
        r = verify_ibp_identity(_smooth_input(p["u"], n, spec, p["eps"]), _smooth_input(p["phi"], n, spec, p["eps"]),
                                cut, n, spec)
        rows.append((m, r.lhs, r.rhs, r.residual))
    quantities = {"residual": Quantity(rows[0][3], tol, 0.0)}
    ok = quantities["residual"].within()
    for (m0, *_, r0), (m1, *_, r1) in zip(rows, rows[1:]):
        q = Quantity(r1 / r0 if r0 > 0 else 0.0, 0.5, 0.0)
        quantities[f"refinement_{m0}_{m1}"] = q
        ok = ok and q.within()
    table = table_from_records(("resolution", "lhs", "rhs", "residual"), rows)
    plots = [LogLogPlot("residuals", "resolution", "residual", *_loglog_line(rows),
                        title="ibp residual")] if len(rows) >= 3 else []
    return _report(quantities, {"residuals": table}, f"residual {rows[0][3]:.3e}", "pass" if ok else "fail",
                   plots=plots)


def _loglog_line(rows) -> tuple[float, float]:
    fit = fit_loglog_slope([(r[0], r[3]) for r in rows if r[3] > 0])
    return fit.slope, fit.intercept


# -- calibrate --------------------------------------------------------------------------

def _check_calibrate(p):
    if any(n not in (1, 2) for n in p["kappa_n"]):
        raise ValueError("kappa is calibrated for n = 1 or 2")


def _run_calibrate(p) -> ExperimentReport:
    quantities, data, rows = {}, {}, []
    for n in p["kappa_n"]:
        cal = calibrate_kappa(n)
        quantities[f"kappa_{n}"] = Quantity(cal.kappa, 0.01 * cal.closed_form, cal.closed_form)
        if cal.radial_ratio is not None:
            quantities[f"radial_ratio_{n}"] = Quantity(cal.radial_ratio, 0.01, 1.0)
        data.setdefault("kappa", {})[str(n)] = cal.kappa
        rows.append(("kappa", n, cal.kappa))
    if p["bojarski"] == "yes":
        b = calibrate_bojarski(cells=p["bojarski_cells"])
        quantities["bojarski_2"] = Quantity(b.ratio, 0.05, 0.5)
        data["bojarski"] = {"2": b.ratio}
        rows.append(("bojarski", 2, b.ratio))
    path = calibration.write_calibration(data, p["file"] or None)
    ok = all(q.within() for q in quantities.values())
    return _report(quantities, {"constants": table_from_records(("constant", "n", "value"), rows)},
                   f"written to {path}", "pass" if ok else "fail")


_OPT_INT = _optional(_int)
_OPT_FLOAT = _optional(_float)
_OPT_MODEL = _optional(_model)

EXPERIMENTS: dict[str, Experiment] = {
    "lelong": Experiment((
        Param("phi", _model, required=True, help="model string"),
        Param("n", _OPT_INT, help="complex dimension (default from the model)"),
        Param("tolerance", _float, 0.01, "tolerance on the Lelong number"),
    ), _run_lelong, _check_lelong, "Lelong number from sphere suprema"),
    "decay": Experiment((
        Param("phi", _model, required=True, help="model string"),
        Param("n", _OPT_INT, help="complex dimension"),
        Param("u", _OPT_MODEL, help="potential whose Monge-Ampere measure replaces Lebesgue"),
        Param("thresholds", _floats, "1,2,3,4,5,6", "levels M of {phi <= -M}"),
        Param("resolution", _OPT_INT, help="cells per axis (default 256 for n=1, 40 for n=2)"),
        Param("half_width", _float, 1.0, "half width of the base cube"),
        Param("tolerance", _float, 0.05, "relative tolerance on the rate"),
    ), _run_decay, _check_decay, "sublevel-set decay rate"),
    "skoda": Experiment((
        Param("u", _model, required=True, help="potential model"),
        Param("phi", _model, required=True, help="weight model"),
        Param("n", _OPT_INT, help="complex dimension"),
        Param("k_range", _ints, "2..9", "dyadic annuli k"),
        Param("resolution", _OPT_INT, help="cells per annulus axis"),
        Param("representation", _choice("analytic-density", "laplacian-1d"), "analytic-density",
              "Monge-Ampere representation"),
        Param("threshold", _float, 0.05, "slope band classified inconclusive"),
        Param("exponent_tol", _float, 0.05, "tolerance on the fitted exponent"),
    ), _run_skoda, _check_skoda, "dyadic annulus profile of exp(-phi) (dd^c u)^n"),
    "maximal": Experiment((
        Param("measure", _atoms, "(0,0):1", "atoms (x,y):m;..."),
        Param("operator", _choice("hl", "riesz", "maximal-riesz"), "hl", "operator"),
        Param("alpha", _float, 1.0, "Riesz order"),
        Param("mode", _choice("global", "local"), "global", "maximal function mode"),
        Param("rho", _OPT_FLOAT, help="radius cap in local mode"),
        Param("t_range", _dyadic, "4..256", "thresholds: a..b for powers of two, or a list"),
        Param("resolution", _int, 512, "cells per axis"),
        Param("half_width", _float, 1.2, "half width of the grid"),
    ), _run_maximal, _check_maximal, "weak-type profile of a maximal or Riesz operator"),
    "lipschitz": Experiment((
        Param("F", _OPT_MODEL, help="positive superharmonic model, e.g. neg:lognorm:c=1"),
        Param("phi", _OPT_MODEL, help="plurisubharmonic model; F = -phi"),
        Param("n", _OPT_INT, help="complex dimension"),
        Param("k", _floats, "8,16,32,64", "Lipschitz constants"),
        Param("c0", _OPT_FLOAT, help="threshold constant (default from calibration)"),
        Param("alpha_d", _float, 0.95, "density fraction"),
        Param("seed", _int, 42, "verification seed"),
        Param("permutations", _choice("all", "identity"), "all", "coordinate orders"),
        Param("resolution", _OPT_INT, help="cells per axis (default 512 for n=1, 96 for n=2)"),
        Param("half_width", _float, 1.0, "half width of the grid"),
        Param("radius", _float, 1.0, "polydisc radius"),
        Param("slope_tol", _float, 0.25, "tolerance on the log-log slope"),
    ), _run_lipschitz, _check_lipschitz, "Lipschitz extraction and its complement law"),
    "potential1d": Experiment((
        Param("atoms", _atoms, "(0,0):1", "atoms (x,y):m;... or none"),
        Param("radius", _float, 1.0, "domain disc radius"),
        Param("K_radius", _float, 0.75, "radius of the compact K"),
        Param("k", _floats, "8,16,32,64", "Lipschitz constants"),
        Param("resolution", _int, 1024, "cells per axis on the box of K"),
        Param("slope_tol", _float, 0.25, "tolerance on the log-log slope"),
        Param("spread", _float, 4.0, "allowed max/min of |K \\ L| k^2 / |mu|^2"),
    ), _run_potential1d, _check_potential1d, "one-variable extraction from a Green potential"),
    "ibp": Experiment((
        Param("u", _text, "quad", "quad, quad:j=J or a model (mollified at eps)"),
        Param("phi", _text, "quad", "quad, quad:j=J or a model (mollified at eps)"),
        Param("n", _int, 1, "complex dimension"),
        Param("resolution", _optional(_ints), help="grid sizes (default 256,512 for n=1, 48,64 for n=2)"),
        Param("eps", _float, 0.25, "mollification radius for catalog models"),
        Param("inner", _float, 0.4, "cutoff inner radius"),
        Param("outer", _float, 0.8, "cutoff outer radius"),
        Param("half_width", _float, 1.0, "half width of the grid"),
        Param("tolerance", _OPT_FLOAT, help="residual tolerance (default 1e-3 for n=1, 5e-2 for n=2)"),
    ), _run_ibp, _check_ibp, "integration-by-parts identity residual"),
    "calibrate": Experiment((
        Param("kappa_n", _ints, "1,2", "dimensions for kappa_n"),
        Param("bojarski", _choice("yes", "no"), "yes", "also measure the Bojarski constant"),
        Param("bojarski_cells", _int, 512, "grid size of the Bojarski run"),
        Param("file", _optional(_text), help="calibration file (default from the environment)"),
    ), _run_calibrate, _check_calibrate, "compute and cache calibrated constants"),
}
