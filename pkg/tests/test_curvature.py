import numpy as np
import pytest

from tamedcalc import KatoMeasure, build_model, mesh_size, taming_measure
from tamedcalc.curvature import (bochner_check, gamma2, hodge_energy, n_ricci, ricci_density_ratio_error,
                                 ricci_measure, ricci_numerator, self_improvement_check, trace_dimension_check,
                                 vector_q_bochner, weitzenboeck_residual)
from tamedcalc.fields import VectorField, nodal_inner, norm_cell
from tamedcalc.first_order import MeasureField, gradient
from tamedcalc.randomfields import smooth_field

from conftest import observed_orders


def _ladder(shape, levels):
    return [build_model(shape, refinement=lv) for lv in levels]


def _field_scale(s, X):
    return float(np.sum(s.cell_measure * norm_cell(X) ** 2))


# -- Gamma_2 and Bochner --------------------------------------------------------------

def test_gamma2_of_linear_function_on_interval_vanishes(interval3):
    g2 = gamma2(interval3, interval3.vertices[:, 0])
    assert np.max(np.abs(g2.interior)) < 1e-10
    assert np.max(np.abs(g2.boundary)) < 1e-10


def test_gamma2_of_cosine_integrates_to_squared_second_derivative():
    # int (f'')^2 dx = pi^4 / 2 for f = cos(pi x), with no boundary contribution
    errs, hs = [], []
    for s in _ladder("interval", (2, 3, 4, 5)):
        errs.append(abs(gamma2(s, np.cos(np.pi * s.vertices[:, 0])).total() / (np.pi ** 4 / 2) - 1))
        hs.append(mesh_size(s))
    assert max(errs[1:]) < 0.02
    assert min(observed_orders(hs, errs)) >= 1.5


def test_bochner_is_exact_for_quadratics_on_flat_rectangle():
    for s in _ladder("rectangle", (1, 2, 3)):
        x, y = s.vertices.T
        quad = 0.7 * x ** 2 - 0.4 * x * y + 0.3 * y ** 2 + x
        rep = bochner_check(s, quad)
        assert rep.min_interior >= -1e-8


def test_gamma2_on_sphere_adds_gradient_norm():
    # Gamma_2(f) = |Hess f|^2 + Ric(grad f, grad f) with Ric = 1
    errs, hs = [], []
    for s in _ladder("sphere", (2, 3, 4)):
        f = s.vertices[:, 2]
        rep = bochner_check(s, f)
        gam = np.asarray(nodal_inner(gradient(s, f), gradient(s, f)))
        errs.append(np.sum(s.interior_mass * np.abs(rep.details["gap"] - gam)) / np.sum(s.interior_mass * gam))
        hs.append(mesh_size(s))
    assert errs[-1] < 0.01
    assert min(observed_orders(hs, errs)) >= 1.0


def test_bochner_boundary_part_on_disk_is_nonnegative_up_to_h():
    for s in _ladder("disk", (2, 3, 4)):
        f = smooth_field(s, 0)
        rep = bochner_check(s, f, taming_measure(s))
        assert rep.min_boundary >= -3.0 * mesh_size(s)


def test_q1_bochner_on_interval_gradient_field(interval3):
    X = gradient(interval3, np.cos(np.pi * interval3.vertices[:, 0]))
    rep = vector_q_bochner(X, KatoMeasure(interval3), q=1.0)
    assert rep.min_interior >= -1e-6
    assert rep.details["measure"].negative_tv() == 0.0


def test_q_bochner_violation_on_disk_vanishes_in_total_variation():
    viol, hs = [], []
    for s in _ladder("disk", (1, 2, 3, 4)):
        X = gradient(s, smooth_field(s, 0))
        viol.append(vector_q_bochner(X, taming_measure(s), q=1.0).details["measure"].negative_tv() / _field_scale(s, X))
        hs.append(mesh_size(s))
    assert viol[-1] < 0.05
    assert np.all(np.diff(viol) < 0)


def test_q2_bochner_reduces_to_hodge_form(disk2):
    X = gradient(disk2, smooth_field(disk2, 1))
    meas = vector_q_bochner(X, KatoMeasure(disk2), q=2.0).details["measure"]
    # total mass: -(1/2) int DELTA |X|^2 vanishes, leaving the Hodge energy
    assert meas.total() == pytest.approx(hodge_energy(X), rel=1e-10)


def test_q_out_of_range_is_rejected(disk2):
    with pytest.raises(ValueError):
        vector_q_bochner(gradient(disk2, disk2.vertices[:, 0]), q=2.5)


# -- self-improvement and dimension ---------------------------------------------------------

def test_self_improvement_on_rectangle_single_function():
    for s in _ladder("rectangle", (1, 2, 3)):
        f = smooth_field(s, 0)
        rep = self_improvement_check(s, [f], [np.ones(s.n_vertices)], [f])
        iv = s.interior_vertices()
        rel = rep.details["slack"][iv] / np.max(np.abs(rep.details["dominant"][iv]))
        assert rel.min() >= -1e-6


def test_self_improvement_with_zero_test_functions_is_trivial(disk2):
    f = smooth_field(disk2, 0)
    rep = self_improvement_check(disk2, [f], [f], [np.zeros(disk2.n_vertices)])
    assert np.all(rep.details["slack"] == 0.0)
    assert rep.passed


def test_self_improvement_rejects_mismatched_lists(disk2):
    with pytest.raises(ValueError):
        self_improvement_check(disk2, [disk2.vertices[:, 0]], [], [])


def test_trace_inequality_and_rank(disk2):
    hs = [disk2.vertices[:, 0], disk2.vertices[:, 1], smooth_field(disk2, 0)]
    out = trace_dimension_check(disk2, hs, N=2, f=smooth_field(disk2, 1))
    assert out["trace_slack_min"] >= -1e-12
    assert out["max_rank"] == 2 and out["rank_ok"] and out["dimension_ok"] and not out["violation"]


def test_dimension_below_topological_dimension_is_flagged(disk2):
    out = trace_dimension_check(disk2, [disk2.vertices[:, 0], disk2.vertices[:, 1]], N=1.5)
    assert not out["dimension_ok"] and out["violation"]
    with pytest.raises(ValueError, match="dimension"):
        n_ricci(gradient(disk2, disk2.vertices[:, 0]), gradient(disk2, disk2.vertices[:, 0]), N=1.5)


def test_trace_of_hessian_matches_laplacian_on_rectangle():
    errs, hs = [], []
    for s in _ladder("rectangle", (1, 2, 3, 4)):
        errs.append(trace_dimension_check(s, [s.vertices[:, 0]], N=2, f=smooth_field(s, 0))["trace_hessian_residual"])
        hs.append(mesh_size(s))
    assert min(observed_orders(hs, errs)) >= 1.0


# -- Ricci measure ---------------------------------------------------------------------------

def _gradients(s, n=3):
    return [gradient(s, smooth_field(s, 0, i)) for i in range(n)]


@pytest.mark.parametrize("shape", ["disk", "sphere", "annulus"])
def test_ricci_is_symmetric_and_bilinear(shape):
    s = build_model(shape, refinement=2)
    X, Y, Z = _gradients(s)
    a = ricci_numerator(X, Y)
    scale = np.max(np.abs(a))
    assert np.max(np.abs(a - ricci_numerator(Y, X))) <= 1e-11 * scale
    comb = ricci_numerator(X * 2.5 + Z, Y) - 2.5 * a - ricci_numerator(Z, Y)
    assert np.max(np.abs(comb)) <= 1e-11 * scale


def _homogeneity(s):
    X, Y, _ = _gradients(s)
    x, y = s.vertices[:, 0], s.vertices[:, 1]
    w = np.cos(x) + 0.5 * y
    d = MeasureField.from_numerator(s, ricci_numerator(X.scale(w), Y) - w * ricci_numerator(X, Y))
    scale = float(np.sum(s.cell_measure * norm_cell(X) * norm_cell(Y)))
    return d, scale, np.exp(-x ** 2)


@pytest.mark.parametrize("shape", ["rectangle", "disk", "sphere"])
def test_ricci_test_function_homogeneity_weakly(shape):
    errs, hs = [], []
    for s in _ladder(shape, (2, 3, 4)):
        d, scale, phi = _homogeneity(s)
        errs.append(abs(d.pair(phi)) / scale)
        hs.append(mesh_size(s))
    assert min(observed_orders(hs, errs)) >= 1.5


def test_ricci_test_function_homogeneity_away_from_boundary():
    errs, hs = [], []
    for s in _ladder("rectangle", (2, 3, 4)):
        d, scale, _ = _homogeneity(s)
        lo, hi = s.vertices.min(0), s.vertices.max(0)
        far = np.min(np.concatenate([s.vertices - lo, hi - s.vertices], axis=1), axis=1) > 0.1
        errs.append(np.sum(s.interior_mass[far] * np.abs(d.interior[far])) / scale)
        hs.append(mesh_size(s))
    assert min(observed_orders(hs, errs)) >= 1.5


def test_ricci_homogeneity_total_variation_stays_bounded():
    # codimension-one layers keep the strong residual at a fixed size
    tvs = []
    for s in _ladder("rectangle", (2, 3, 4)):
        d, scale, _ = _homogeneity(s)
        tvs.append(d.tv() / scale)
    assert max(tvs) < 0.5 and tvs[-1] <= tvs[0]


def test_ricci_global_identity_and_tv_bound():
    for shape in ("disk", "sphere", "annulus", "rectangle"):
        s = build_model(shape, refinement=2)
        X = gradient(s, smooth_field(s, 0))
        r = ricci_measure(X, X, taming_measure(s))
        assert r.residuals["global_identity"] <= 1e-9 * max(1.0, hodge_energy(X))
        assert r.residuals["tv_bound_slack"] >= 0.0


def test_ricci_density_ratio_on_sphere():
    errs, hs = [], []
    for s in _ladder("sphere", (2, 3, 4)):
        x, y, z = s.vertices.T
        X = gradient(s, x * y + z)
        errs.append(ricci_density_ratio_error(X, ricci_measure(X, X, taming_measure(s))))
        hs.append(mesh_size(s))
    assert errs[-1] < 0.1
    assert min(observed_orders(hs, errs)) >= 0.9


def test_second_fundamental_form_of_disk():
    errs, hs = [], []
    for s in _ladder("disk", (2, 3, 4)):
        x, y = s.vertices.T
        X = gradient(s, 3 * x - x * (x ** 2 + y ** 2))
        r = ricci_measure(X, X, taming_measure(s))
        x2 = np.asarray(nodal_inner(X, X))[s.boundary_vertices]
        errs.append(np.sum(s.boundary_mass * np.abs(r.ii_boundary - x2)) / np.sum(s.boundary_mass * x2))
        hs.append(mesh_size(s))
    assert min(observed_orders(hs, errs)) >= 0.9


def test_flat_rectangle_ricci_and_second_fundamental_form_vanish():
    ric, ii = [], []
    for s in _ladder("rectangle", (1, 2, 3, 4)):
        X = gradient(s, smooth_field(s, 0))
        r = ricci_measure(X, X)
        scale = _field_scale(s, X)
        ric.append(np.sum(s.interior_mass * np.abs(r.ric_interior)) / scale)
        ii.append(np.sum(s.boundary_mass * np.abs(r.ii_boundary)) / scale)
    assert np.all(np.diff(ric) < 0) and np.all(np.diff(ii) < 0)
    assert ric[-1] < 0.1 * ric[0] and ii[-1] < 0.1 * ii[0]


def test_ricci_lower_bound_violation_decays_on_disk():
    viol = []
    for s in _ladder("disk", (1, 2, 3, 4)):
        X = gradient(s, smooth_field(s, 0))
        viol.append(ricci_measure(X, X, taming_measure(s)).residuals["lower_bound_violation"] / _field_scale(s, X))
    assert np.all(np.diff(viol) < 0)


@pytest.mark.parametrize("shape,levels,min_order", [("sphere", (2, 3, 4), 1.5), ("torus", (2, 3, 4), 1.5)])
def test_weitzenboeck_residual_converges(shape, levels, min_order):
    errs, hs = [], []
    for s in _ladder(shape, levels):
        x, y = s.vertices[:, 0], s.vertices[:, 1]
        if shape == "torus":
            Lx, Ly = s.size_params
            f = np.sin(2 * np.pi * x / Lx) * np.cos(2 * np.pi * y / Ly)
        else:
            f = x * y + s.vertices[:, 2]
        X = gradient(s, f)
        errs.append(weitzenboeck_residual(X, X))
        hs.append(mesh_size(s))
    assert min(observed_orders(hs, errs)) >= min_order


def test_weitzenboeck_of_zero_field(sphere2):
    Z = VectorField(sphere2, np.zeros((sphere2.n_cells, 2)))
    assert weitzenboeck_residual(Z, Z) == 0.0
    assert np.all(ricci_numerator(Z, Z) == 0.0)


# -- N-Ricci -----------------------------------------------------------------------------------

def test_n_ricci_infinite_dimension_is_ricci(disk2):
    X = gradient(disk2, smooth_field(disk2, 0))
    kap = taming_measure(disk2)
    nr, r = n_ricci(X, X, kap), ricci_measure(X, X, kap)
    assert np.array_equal(nr.measure.numerator(), r.measure.numerator())


def test_n_ricci_on_rectangle_at_dimension_two():
    defects, singular = [], []
    for s in _ladder("rectangle", (1, 2, 3, 4)):
        X = gradient(s, smooth_field(s, 0))
        nr = n_ricci(X, X, N=2)
        defects.append(nr.residuals["max_defect"])
        singular.append(nr.residuals["singular_vertices"])
    assert np.all(np.diff(defects) < 0)
    assert defects[-1] < 0.1
    assert singular[-1] == 0


def test_n_ricci_lower_bound_on_sphere_within_h():
    for s in _ladder("sphere", (2, 3, 4)):
        X = gradient(s, s.vertices[:, 2])
        nr = n_ricci(X, X, taming_measure(s), N=2)
        assert nr.residuals["lower_bound_violation"] / _field_scale(s, X) <= 3.0 * mesh_size(s)


def test_n_ricci_second_inequality_on_disk():
    viol = []
    for s in _ladder("disk", (1, 2, 3, 4)):
        X = gradient(s, smooth_field(s, 0))
        nr = n_ricci(X, X, taming_measure(s), N=3)
        viol.append(nr.residuals["second_inequality_violation"] / _field_scale(s, X))
        assert viol[-1] <= 3.0 * mesh_size(s)


def test_ricci_report_serializes(disk2):
    import json
    X = gradient(disk2, smooth_field(disk2, 0))
    d = ricci_measure(X, X, taming_measure(disk2)).to_dict()
    back = json.loads(json.dumps(d))
    assert back["level"] == disk2.level and len(back["ii_boundary"]) == len(disk2.boundary_vertices)
