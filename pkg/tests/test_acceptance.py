"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pshlab.grid import DEFAULT_BUDGET, GridSpec, atoms_measure, fit_loglog_slope, sample_field
from pshlab.lelong import sublevel_decay
from pshlab.lipschitz import ExtractionParams, complement_law, extract_lipschitz_set, partial_maximal_fields
from pshlab.maximal import MaximalParams, RieszParams, hl_maximal, maximal_riesz, riesz_potential, weak_type_profile
from pshlab.monge_ampere import (CutoffSpec, MAContext, classify_convergence, skoda_integral_profile,
                                 verify_ibp_identity)
from pshlab.potential1d import lipschitz_sets_1d
from pshlab.zoo import ModelFunction, mollify, parse_model

pytestmark = pytest.mark.slow

DYADIC = [2.0**k for k in range(2, 9)]
SUITE_BUDGET = 15 * 60


def report(log, number, checks, detail):
    ok = all(checks.values())
    failed = [name for name, good in checks.items() if not good]
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    if failed:
        line += f"  [failed: {', '.join(failed)}]"
    log["lines"].append(line)
    print(line)
    assert ok, line


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def skoda_case(phi, u, ks):
    prof = skoda_integral_profile(phi, MAContext(u.n, u), ks)
    return classify_convergence(prof)


def test_criterion_01_sharp_skoda_1d(suite_log):
    checks, parts = {}, []
    for alpha in (0.3, 0.5, 1.0):
        for c, want in ((alpha - 0.1, "converges"), (alpha + 0.1, "diverges")):
            v, dt = timed(lambda: skoda_case(ModelFunction("lognorm", 1, c=c), ModelFunction("radial", 1, alpha=alpha),
                                             range(2, 10)))
            tag = f"a={alpha:g},c={c:.1f}"
            checks[f"{tag} verdict"] = v.verdict == want
            checks[f"{tag} exponent"] = abs(v.exponent - (alpha - c)) <= 0.03
            checks[f"{tag} time"] = dt < 30
            parts.append(f"{tag}:{v.verdict[:4]} {v.exponent:+.3f}")
    report(suite_log, 1, checks, "; ".join(parts))


def test_criterion_02_separable_sharp(suite_log):
    checks, parts = {}, []
    u = ModelFunction("sep", 2, alpha=0.5)
    for c, want in ((0.4, "converges"), (0.6, "diverges")):
        v, dt = timed(lambda: skoda_case(ModelFunction("logcoord", 2, c=c, j=1), u, range(2, 10)))
        checks[f"c={c} verdict"] = v.verdict == want
        checks[f"c={c} time"] = dt < 120
        parts.append(f"c={c}: {v.verdict} exponent {v.exponent:+.3f} ({dt:.1f}s)")
    report(suite_log, 2, checks, "; ".join(parts))


def test_criterion_03_non_integrable(suite_log):
    checks, parts = {}, []
    for n, alpha, c in ((1, 0.5, 1.0), (2, 0.5, 1.5)):
        v = skoda_case(ModelFunction("lognorm", n, c=c), ModelFunction("radial", n, alpha=alpha), range(2, 10))
        growth = -v.exponent
        checks[f"n={n} verdict"] = v.verdict == "diverges"
        checks[f"n={n} exponent"] = abs(growth - (c - n * alpha)) <= 0.05
        parts.append(f"(n,a,c)=({n},{alpha},{c}): growth {growth:.3f} vs {c - n * alpha:.3f}")
    report(suite_log, 3, checks, "; ".join(parts))


def test_criterion_04_kiselman_decay(suite_log):
    checks, parts = {}, []
    t0 = time.perf_counter()
    for n, g0 in ((1, 1.0), (1, 2.0), (2, 1.0)):
        spec = GridSpec.cube(1.0, 256 if n == 1 else 40, 2 * n)
        fit = sublevel_decay(ModelFunction("lognorm", n, c=g0), spec=spec)
        want = 2 * n / g0
        checks[f"({n},{g0:g}) rate"] = abs(fit.gamma - want) <= 0.05 * want
        # for n = 1 the bound is attained, so it is checked at the same 5% tolerance
        checks[f"({n},{g0:g}) lemma"] = fit.gamma >= 0.95 * 2 / g0
        parts.append(f"(n,g0)=({n},{g0:g}): {fit.gamma:.5f} vs {want:.3f}, bound {2 / g0:.3f}")
    dt = time.perf_counter() - t0
    checks["time"] = dt < 30
    report(suite_log, 4, checks, "; ".join(parts) + f" ({dt:.1f}s)")


def test_criterion_05_weak_type(suite_log):
    t0 = time.perf_counter()
    spec = GridSpec.cube(1.2, 512, 2)
    M = hl_maximal(atoms_measure(spec, [((0, 0), 1.0)]), MaximalParams(r_max=1.2))
    hl = weak_type_profile(M, 1, DYADIC)
    fine = GridSpec.cube(0.6, 2048, 2)
    I1 = weak_type_profile(riesz_potential(atoms_measure(fine, [((0, 0), 1.0)]), RieszParams(1.0)), 2, DYADIC,
                           strict=False)
    mid = GridSpec.cube(0.6, 1024, 2)
    J1 = weak_type_profile(maximal_riesz(atoms_measure(mid, [((0, 0), 1.0)]), RieszParams(1.0),
                                         MaximalParams(r_max=0.6)), 2, DYADIC, strict=False)
    dt = time.perf_counter() - t0
    both = [(t, a, b) for t, a, b, ra, rb in zip(DYADIC, J1.products, I1.products, J1.resolved, I1.resolved)
            if ra and rb]
    worst = max(a / b for _, a, b in both)
    checks = {
        "M(delta) sup 4 +-15%": abs(hl.sup - 4.0) <= 0.6,
        "I1 sup pi +-5%": abs(I1.sup - math.pi) <= 0.05 * math.pi,
        "maximal-Riesz <= 4x I1": len(both) >= 3 and worst <= 4.0,
        "time": dt < 60,
    }
    report(suite_log, 5, checks, f"M sup {hl.sup:.3f}; I1 sup {I1.sup:.4f}; max J1/I1 {worst:.2f} over "
                                 f"{len(both)} thresholds ({dt:.1f}s)")


def _sq(xs):
    return xs[0] ** 2 + xs[1] ** 2


def test_criterion_06_ibp(suite_log):
    cut = CutoffSpec(0.4, 0.8)
    r1 = [verify_ibp_identity(_sq, _sq, cut, 1, GridSpec.cube(1, m, 2)).residual for m in (256, 512)]
    u = ModelFunction("sep", 2, alpha=0.5)
    r2 = []
    for m in (48, 64):
        spec = GridSpec.cube(1, m, 4)
        r2.append(verify_ibp_identity(mollify(u, 0.25, spec), sample_field(_sq, spec), cut, 2, spec).residual)
    checks = {
        "n=1 256^2 <= 1e-3": r1[0] <= 1e-3,
        "n=1 halving": r1[1] <= r1[0] / 2,
        "n=2 48^4 <= 5e-2": r2[0] <= 5e-2,
        "n=2 halving at 64^4": r2[1] <= r2[0] / 2,
    }
    report(suite_log, 6, checks, f"n=1 {r1[0]:.2e} -> {r1[1]:.2e}; n=2 {r2[0]:.2e} -> {r2[1]:.2e} "
                                 f"(ratio {r2[1] / r2[0]:.3f})")


def test_criterion_07_lipschitz_law(suite_log):
    ks = [8, 16, 32, 64]
    checks, parts = {}, []
    cases = ((1, "neg:lognorm:c=1", 512, 60), (2, "neg:logprod:c=1", 96, 300))
    for n, text, m, limit in cases:
        spec = GridSpec.cube(1.0, m, 2 * n, budget=max(DEFAULT_BUDGET, m ** (2 * n)))
        (reports, slope, _), dt = timed(lambda: complement_law(parse_model(text, n), ExtractionParams(k=ks[0]), ks,
                                                               spec))
        verified = all(r.verify is not None and r.verify.passed and
                       r.verify.constant <= 2 * math.factorial(n) * n * r.k for r in reports)
        checks[f"n={n} slope"] = abs(slope + 2.0) <= 0.25
        checks[f"n={n} verify"] = verified
        checks[f"n={n} time"] = dt < limit
        comps = ", ".join(f"{r.complement:.3g}" for r in reports)
        parts.append(f"n={n} at {m}^{2 * n}: slope {slope:.3f} [{comps}] ({dt:.0f}s)")
    report(suite_log, 7, checks, "; ".join(parts))


def test_criterion_08_scale_quadratic(suite_log):
    spec = GridSpec.cube(1.0, 1024, 2)
    ks = [16, 32]
    C = {}
    for t in (1, 3):
        F = parse_model(f"neg:lognorm:c={t}", 1)
        params = ExtractionParams(k=ks[0])
        fields = partial_maximal_fields(F, spec, params.rho, params.per_octave)
        C[t] = [extract_lipschitz_set(F, params.with_k(k), spec, fields, verify=False)[1].complement * k * k
                for k in ks]
    ratios = [b / a for a, b in zip(C[1], C[3])]
    fitted = math.exp(np.mean(np.log(C[3]))) / math.exp(np.mean(np.log(C[1])))
    checks = {"fitted C ratio 9 +-10%": abs(fitted - 9) <= 0.9}
    report(suite_log, 8, checks, f"C(3F)/C(F) = {fitted:.3f} (per k: " +
           ", ".join(f"k={k}: {r:.3f}" for k, r in zip(ks, ratios)) + ")")


def test_criterion_09_pipeline_fidelity(suite_log):
    ks = [8, 16, 32, 64]
    measures = {"d0": [(0j, 1.0)], "d0+d0.4": [(0j, 1.0), (0.4 + 0j, 1.0)], "3d0": [(0j, 3.0)]}
    norm, parts = {}, []
    for name, atoms in measures.items():
        out = lipschitz_sets_1d(atoms, ks, verify=False)
        norm[name] = [e.normalized for _, e in out]
        slope = fit_loglog_slope([(e.k, e.complement) for _, e in out]).slope
        parts.append(f"{name}: " + "/".join(f"{v:.3f}" for v in norm[name]) + f" slope {slope:.2f}")
    allv = [v for vs in norm.values() for v in vs]
    spread = max(allv) / min(allv)
    report(suite_log, 9, {"within factor 4": min(allv) > 0 and spread <= 4}, f"spread {spread:.2f}; " +
           "; ".join(parts))


def test_criterion_10_invariant_suites(suite_log):
    here = Path(__file__).parent
    if suite_log["passed"] == 0 and not suite_log["failed"]:
        # acceptance run on its own: run the module suites now
        files = sorted(str(p) for p in here.glob("test_*.py") if p.name != Path(__file__).name)
        t0 = time.perf_counter()
        res = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                             capture_output=True, text=True, cwd=here.parent)
        dt = time.perf_counter() - t0
        ok = res.returncode == 0
        detail = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else "no output"
    else:
        dt = time.perf_counter() - suite_log["t0"]
        ok = not suite_log["failed"]
        detail = f"{suite_log['passed']} module tests passed, {len(suite_log['failed'])} failed"
    report(suite_log, 10, {"module suites pass": ok, "under 15 min": dt < SUITE_BUDGET},
           f"{detail} ({dt:.0f}s)")
