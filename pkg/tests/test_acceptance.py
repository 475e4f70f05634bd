"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line and records it for the terminal
summary.  Runtimes are part of each criterion.
"""
import time

import numpy as np
import scipy.linalg as sla

from tamedcalc import KatoMeasure, assemble, build_model, fit_form_bound, kato_constant, mesh_size, spectrum
from tamedcalc.curvature import ricci_density_ratio_error, ricci_measure, weitzenboeck_residual
from tamedcalc.fields import nodal_inner
from tamedcalc.first_order import gradient
from tamedcalc.kato import taming_measure
from tamedcalc.runner import config_from_mapping, run
from tamedcalc.second_order import harmonic_forms

from conftest import ACCEPTANCE_LINES, observed_orders

ALL_SHAPES = "interval, rectangle, disk, annulus, sphere, torus, hemisphere"


def _report(number, title, ok, detail, elapsed, limit):
    ok = ok and elapsed < limit
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} ({detail}; {elapsed:.1f} s of {limit:.0f} s)"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def _run(shapes, suites, ladder):
    cfg = config_from_mapping({"model.shape": shapes, "suites": suites, "refinement_ladder": ladder})
    return run(cfg, write=False, timestamp="acceptance")


def _ladder_ok(hs, errs, min_order):
    orders = observed_orders(hs, errs)
    return bool(np.all(np.diff(errs) < 0) and np.all(orders >= min_order)), float(np.min(orders))


# -- 1: exact identities ----------------------------------------------------------------------

EXACT_FAMILIES = {
    "energy_carre_du_champ", "energy_laplacian",               # E(f,g) = int Gamma = -int g Delta f
    "divergence_of_gradient", "measure_divergence_laplacian",  # div grad f = Delta f
    "d_squared", "hodge_zero_is_minus_laplacian",
    "gauss_green", "measure_reconstruction",
    "sym_asym_decomposition",
    "flat_isometry", "sharp_flat_inverse",
}


def test_criterion_1_exact_identities():
    start = time.perf_counter()
    rep = _run(ALL_SHAPES, "core, first_order, second_order", "2")
    elapsed = time.perf_counter() - start
    rows = [e for e in rep["entries"] if e["family"] in EXACT_FAMILIES]
    worst = max(e["value"] for e in rows)
    seen = {e["family"] for e in rows}
    ok = seen == EXACT_FAMILIES and worst <= 1e-11
    assert _report(1, "exact identities", ok, f"{len(rows)} checks, worst relative error {worst:.1e}", elapsed, 10)


# -- 2: inequalities ----------------------------------------------------------------------------

INEQUALITY_FAMILIES = {
    "kato_inequality", "kato_inequality_module",
    "vector_domination", "hsu_forms", "gradient_contraction",
    "bochner", "bochner_quadratic", "trace_inequality",
    "spectral_bottom_vectors", "spectral_bottom_forms",
    "q_bochner_1", "q_bochner_1.5", "q_bochner_2",
    "ricci_lower_bound",
}


def test_criterion_2_inequalities():
    start = time.perf_counter()
    rep = _run(ALL_SHAPES, "second_order, curvature, hodge, flows", "3")
    elapsed = time.perf_counter() - start
    rows = [e for e in rep["entries"] if e["family"] in INEQUALITY_FAMILIES]
    failed = [f"{e['shape']}/{e['family']}" for e in rows if not e["passed"]]
    worst = min(e["value"] / e["tolerance"] if e["tolerance"] else 0.0 for e in rows)
    seen = {e["family"] for e in rows}
    ok = not failed and seen == INEQUALITY_FAMILIES
    detail = f"{len(rows)} checks, worst slack/tolerance {worst:.2f}" + (f", failed {failed}" if failed else "")
    assert _report(2, "inequalities", ok, detail, elapsed, 120)


# -- 3: geometric oracles ---------------------------------------------------------------------------

LADDER = (1, 2, 3, 4)


def _interval_eigenvalues():
    hs, errs = [], []
    for lv in LADDER:
        s = build_model("interval", refinement=lv)
        vals = spectrum(assemble(s), 4)[0][1:4]
        exact = (np.pi * np.arange(1, 4)) ** 2
        errs.append(float(np.max(np.abs(vals - exact) / exact)))
        hs.append(mesh_size(s))
    return _ladder_ok(hs, errs, 1.9)


def _disk_second_fundamental_form():
    hs, errs = [], []
    for lv in LADDER:
        s = build_model("disk", refinement=lv)
        x, y = s.vertices.T
        X = gradient(s, 3 * x - x * (x ** 2 + y ** 2))
        r = ricci_measure(X, X, taming_measure(s))
        x2 = np.asarray(nodal_inner(X, X))[s.boundary_vertices]
        errs.append(np.sum(s.boundary_mass * np.abs(r.ii_boundary - x2)) / np.sum(s.boundary_mass * x2))
        hs.append(mesh_size(s))
    return _ladder_ok(hs, errs, 0.9)


def _sphere_ratio_and_weitzenboeck():
    hs, ratio, weitz = [], [], []
    for lv in LADDER:
        s = build_model("sphere", refinement=lv)
        x, y, z = s.vertices.T
        X = gradient(s, x * y + z)
        ratio.append(ricci_density_ratio_error(X, ricci_measure(X, X, taming_measure(s))))
        weitz.append(weitzenboeck_residual(X, X))
        hs.append(mesh_size(s))
    return _ladder_ok(hs, ratio, 0.9), _ladder_ok(hs, weitz, 0.9)


def _torus_weitzenboeck():
    hs, errs = [], []
    for lv in LADDER:
        s = build_model("torus", refinement=lv)
        Lx, Ly = s.size_params
        x, y = s.vertices.T
        X = gradient(s, np.sin(2 * np.pi * x / Lx) * np.cos(2 * np.pi * y / Ly))
        errs.append(weitzenboeck_residual(X, X))
        hs.append(mesh_size(s))
    return _ladder_ok(hs, errs, 0.9)


def _harmonic_dimensions():
    expected = {"annulus": 1, "disk": 0, "torus": 2}
    found = {sh: [len(harmonic_forms(build_model(sh, refinement=lv), 1).basis) for lv in LADDER[1:]]
             for sh in expected}
    return all(all(d == expected[sh] for d in dims) for sh, dims in found.items()), found


def test_criterion_3_geometric_oracles():
    start = time.perf_counter()
    checks = {
        "interval eigenvalues": _interval_eigenvalues(),
        "disk II": _disk_second_fundamental_form(),
        "torus Weitzenboeck": _torus_weitzenboeck(),
    }
    checks["sphere ratio"], checks["sphere Weitzenboeck"] = _sphere_ratio_and_weitzenboeck()
    harm_ok, dims = _harmonic_dimensions()
    elapsed = time.perf_counter() - start
    ok = harm_ok and all(c[0] for c in checks.values())
    detail = ", ".join(f"{k} order {c[1]:.2f}" for k, c in checks.items())
    detail += ", harmonic 1-forms " + " ".join(f"{k}={v}" for k, v in dims.items())
    assert _report(3, "geometric oracles", ok, detail, elapsed, 180)


# -- 4: Kato suite ------------------------------------------------------------------------------------

def test_criterion_4_kato():
    start = time.perf_counter()
    ts = np.array([0.1, 0.05, 0.02, 0.01])
    worst_step, worst_rel, ok = np.inf, 0.0, True
    for shape in ("interval", "disk"):
        s = build_model(shape, refinement=3)
        form = assemble(s)
        for level in (0.5, 1.0, 2.0):
            kap = KatoMeasure(s, 0.0, level)
            K = kato_constant(form, kap, ts)
            step = float(np.min(K[:-1] - K[1:]))
            slope = np.polyfit(np.log(ts), np.log(K), 1)[0]
            ok &= step >= -1e-6 and slope > 0
            worst_step = min(worst_step, step)
            got = fit_form_bound(form, kap, 0.5).alpha_prime
            A = np.diag(kap.lumped()) - 0.5 * form.stiffness.toarray()
            oracle = sla.eigh(A, np.diag(form.mass), eigvals_only=True)[-1]
            r = abs(got - oracle) / abs(oracle)
            worst_rel = max(worst_rel, r)
            ok &= r <= 1e-6
    elapsed = time.perf_counter() - start
    detail = f"smallest profile decrease {worst_step:.2e}, worst form-bound relative error {worst_rel:.1e}"
    assert _report(4, "Kato profiles and form bounds", ok, detail, elapsed, 60)


# -- 5: calculus-rule residuals ------------------------------------------------------------------------

RULE_FAMILIES = {
    "gamma_leibniz", "gamma_chain", "laplacian_leibniz", "laplacian_chain",
    "differential_leibniz", "differential_chain", "divergence_leibniz",
    "hessian_product", "hessian_chain", "metric_compatibility", "torsion",
}


def test_criterion_5_calculus_rules():
    start = time.perf_counter()
    rep = _run("interval, rectangle, disk, annulus, sphere", "core, first_order, second_order", "2, 3, 4")
    elapsed = time.perf_counter() - start
    fams = [f for f in rep["families"] if f["family"] in RULE_FAMILIES]
    bad, worst = [], np.inf
    for f in fams:
        if f["verdict"] == "exact":
            continue
        vals = np.array(f["values"])
        orders = observed_orders(f["h"], vals)
        worst = min(worst, float(np.min(orders)))
        if not (np.all(np.diff(vals) < 0) and np.all(orders >= 0.9)):
            bad.append(f"{f['shape']}/{f['family']}")
    ok = not bad and {f["family"] for f in fams} == RULE_FAMILIES
    detail = f"{len(fams)} families, worst observed order {worst:.2f}" + (f", failed {bad}" if bad else "")
    assert _report(5, "calculus-rule residuals", ok, detail, elapsed, 120)
