import numpy as np
import pytest

from tamedcalc import assemble, build_model, carre_du_champ, laplacian, mesh_size
from tamedcalc import residuals as R
from tamedcalc.dirichlet import cell_to_vertex
from tamedcalc.fields import VectorField, norm_cell
from tamedcalc.first_order import (MeasureField, differential, gauss_green_residual, gradient, l2_divergence,
                                   measure_divergence, measure_laplacian, normal_component)

from conftest import observed_orders


def test_differential_of_constant_and_affine(interval3):
    assert np.all(differential(interval3, np.full(interval3.n_vertices, 3.0)).values == 0.0)
    assert np.allclose(gradient(interval3, interval3.vertices[:, 0]).ambient(), 1.0, atol=1e-13)


def test_differential_norm_matches_carre_du_champ(disk2):
    x, y = disk2.vertices.T
    f = np.sin(2 * x) * np.cos(y)
    avg = cell_to_vertex(disk2, norm_cell(differential(disk2, f)) ** 2)
    assert np.max(np.abs(avg - carre_du_champ(assemble(disk2), f))) <= 1e-12 * np.max(avg)


@pytest.mark.parametrize("shape", ["interval", "disk", "sphere", "annulus"])
def test_divergence_of_gradient_is_laplacian(shape):
    s = build_model(shape, refinement=2)
    f = np.cos(s.vertices @ np.arange(1, s.vertices.shape[1] + 1) * 0.7)
    lap = laplacian(assemble(s), f)
    assert np.max(np.abs(l2_divergence(gradient(s, f)) - lap)) <= 1e-13 * np.max(np.abs(lap))
    assert np.max(np.abs(measure_laplacian(assemble(s), f).numerator()
                         - measure_divergence(gradient(s, f)).numerator())) <= 1e-12


def test_zero_field_has_zero_divergence(disk2):
    assert np.all(l2_divergence(VectorField(disk2, np.zeros((disk2.n_cells, 2)))) == 0.0)


def test_interval_boundary_parts(interval3):
    X = gradient(interval3, interval3.vertices[:, 0])
    bx = interval3.vertices[interval3.boundary_vertices, 0]
    order = np.argsort(bx)
    div = measure_divergence(X)
    assert np.allclose(div.interior, 0.0, atol=1e-12)
    assert np.allclose(div.boundary[order], [1.0, -1.0], atol=1e-13)
    assert np.allclose(normal_component(X).boundary[order], [-1.0, 1.0], atol=1e-13)


def test_compactly_supported_field_has_no_boundary_part(disk2):
    x, y = disk2.vertices.T
    g = np.maximum(0.0, 0.5 - np.hypot(x, y)) ** 2
    X = gradient(disk2, x * y).scale(g)
    assert np.max(np.abs(measure_divergence(X).boundary)) <= 1e-12
    assert np.max(np.abs(normal_component(X).boundary)) <= 1e-12


def test_disk_radial_field():
    interior, bnd, hs = [], [], []
    for lv in (1, 2, 3, 4):
        s = build_model("disk", refinement=lv)
        X = VectorField.from_ambient(s, s.vertices)
        iv = s.interior_vertices()
        d = measure_divergence(X)
        interior.append(np.sum(s.interior_mass[iv] * np.abs(d.interior[iv] - 2.0)))
        bnd.append(np.sum(s.boundary_mass * np.abs(normal_component(X).boundary - 1.0)))
        hs.append(mesh_size(s))
    assert max(interior) < 1e-12
    assert bnd[-1] < 0.2
    assert min(observed_orders(hs, bnd)) >= 0.9


def test_neumann_trace_of_x_on_disk():
    errs, hs = [], []
    for lv in (1, 2, 3, 4):
        s = build_model("disk", refinement=lv)
        nf = normal_component(gradient(s, s.vertices[:, 0])).boundary
        errs.append(np.sum(s.boundary_mass * np.abs(nf - s.vertices[s.boundary_vertices, 0])))
        hs.append(mesh_size(s))
    assert min(observed_orders(hs, errs)) >= 1.0


def test_sphere_has_empty_boundary_part(sphere2):
    x, y, z = sphere2.vertices.T
    X = gradient(sphere2, x * z)
    assert normal_component(X).boundary.size == 0
    h = np.exp(y)
    lhs = np.sum(sphere2.cell_measure * np.sum(differential(sphere2, h).values * X.values, axis=1))
    assert abs(gauss_green_residual(X, h)) <= 1e-12 * max(1.0, abs(lhs))


def test_gauss_green_on_interval_and_disk(interval3, disk2):
    rng = np.random.default_rng(0)
    X = VectorField(interval3, rng.normal(size=(interval3.n_cells, 1)))
    assert abs(gauss_green_residual(X, rng.normal(size=interval3.n_vertices))) <= 1e-13
    worst = 0.0
    for _ in range(100):
        X = VectorField(disk2, rng.normal(size=(disk2.n_cells, 2)))
        worst = max(worst, abs(gauss_green_residual(X, rng.normal(size=disk2.n_vertices))))
    assert worst <= 1e-11


def test_reconstruction_identity(disk2):
    rng = np.random.default_rng(1)
    X = VectorField(disk2, rng.normal(size=(disk2.n_cells, 2)))
    h = rng.normal(size=disk2.n_vertices)
    lhs = -np.sum(disk2.cell_measure * np.sum(differential(disk2, h).values * X.values, axis=1))
    assert measure_divergence(X).pair(h) == pytest.approx(lhs, abs=1e-12)


def test_divergence_tv_is_subadditive(disk2):
    rng = np.random.default_rng(2)
    X = VectorField(disk2, rng.normal(size=(disk2.n_cells, 2)))
    Y = VectorField(disk2, rng.normal(size=(disk2.n_cells, 2)))
    dx, dy, dxy = measure_divergence(X), measure_divergence(Y), measure_divergence(X + Y)
    assert np.allclose(dxy.numerator(), dx.numerator() + dy.numerator())
    assert dxy.tv() <= dx.tv() + dy.tv() + 1e-12


def test_first_order_residuals_converge():
    div_lb, nrm_lb, chain, hs = [], [], [], []
    for lv in (2, 3, 4):
        s = build_model("disk", refinement=lv)
        x, y = s.vertices.T
        X = gradient(s, np.sin(x) * y + x ** 2)
        f = np.cos(x + 2 * y)
        div_lb.append(R.divergence_leibniz(X, f))
        nrm_lb.append(R.normal_leibniz(X, f))
        chain.append(R.differential_chain(s, x * y + y))
        hs.append(mesh_size(s))
    for errs in (div_lb, nrm_lb, chain):
        assert min(observed_orders(hs, errs)) >= 0.9


def test_measure_field_json_round_trip(interval3):
    m = measure_divergence(gradient(interval3, interval3.vertices[:, 0] ** 2))
    d = m.to_dict()
    back = MeasureField(interval3, d["interior"], d["boundary"])
    assert np.allclose(back.numerator(), m.numerator())
    assert d["tv"] == pytest.approx(m.tv())
