import warnings

import numpy as np
import pytest

from tamedcalc import assemble, build_model, carre_du_champ
from tamedcalc.dirichlet import vertex_to_cell
from tamedcalc.fields import (KForm, OneForm, TensorField2, VectorField, coordinate_form, differential_kform,
                              flat, hino_index, identity_tensor, inner_cell, musical, norm_cell, sharp,
                              tensor_ops, tensor_product)
from tamedcalc.first_order import gradient


def _random_field(space, seed):
    rng = np.random.default_rng(seed)
    return VectorField(space, rng.normal(size=(space.n_cells, space.dim)))


def test_flat_metric_leaves_components_unchanged(rect2):
    # in Euclidean coordinates df and grad f of an affine f share components
    f = 2 * rect2.vertices[:, 0] - rect2.vertices[:, 1]
    from tamedcalc.first_order import differential
    expected = np.tile([2.0, -1.0], (rect2.n_cells, 1))
    assert np.allclose(gradient(rect2, f).ambient(), expected, atol=1e-13)
    assert np.allclose(differential(rect2, f).ambient(), expected, atol=1e-13)
    X = _random_field(rect2, 0)
    assert np.allclose(flat(X).ambient(), X.ambient(), atol=1e-13)


def test_sharp_flat_is_identity(sphere2):
    X = _random_field(sphere2, 1)
    assert np.allclose(sharp(flat(X)).values, X.values, atol=1e-13)
    w = OneForm(sphere2, X.values)
    assert np.allclose(musical(musical(w)).values, w.values, atol=1e-13)


def test_musical_maps_are_isometries_on_sphere(sphere2):
    X = _random_field(sphere2, 2)
    assert np.max(np.abs(norm_cell(flat(X)) - norm_cell(X))) <= 1e-12


def test_trace_of_identity_is_dimension(sphere2, interval3):
    assert np.allclose(identity_tensor(sphere2).trace(), 2.0)
    assert np.allclose(identity_tensor(interval3).trace(), 1.0)


def test_transpose_of_tensor_product_swaps_factors(sphere2):
    X, Y = _random_field(sphere2, 3), _random_field(sphere2, 4)
    assert np.allclose(tensor_product(X, Y).transpose().values, tensor_product(Y, X).values)
    assert np.allclose(tensor_product(X, Y).trace(), inner_cell(X, Y), atol=1e-12)


def test_hs_norm_splits_into_sym_and_asym(sphere2):
    A = TensorField2(sphere2, np.random.default_rng(5).normal(size=(sphere2.n_cells, 2, 2)))
    ops = tensor_ops(A, A)
    r = ops["hs_inner"] - ops["sym"].hs_inner(ops["sym"]) - ops["asym"].hs_inner(ops["asym"])
    assert np.max(np.abs(r)) <= 1e-14 * max(1.0, np.max(ops["hs_inner"]))


def test_variance_mismatch_is_rejected(rect2):
    A = identity_tensor(rect2)
    with pytest.raises(ValueError, match="variance"):
        tensor_ops(A, A.raise_())


def test_wedge_antisymmetry(rect2):
    dx, dy = coordinate_form(rect2, 0), coordinate_form(rect2, 1)
    from tamedcalc.fields import wedge
    assert np.allclose(wedge(dx, dx).values, 0.0)
    assert np.allclose(wedge(dx, dy).values, -wedge(dy, dx).values)
    w = wedge(dx, dy)
    assert np.allclose(w.inner(w), 1.0)


def test_wedge_norm_is_gram_determinant(disk2):
    from tamedcalc.fields import wedge
    x, y = disk2.vertices.T
    f, g = np.sin(2 * x) * y, np.exp(x + y)
    df, dg = differential_kform(f, disk2), differential_kform(g, disk2)
    w = wedge(df, dg)
    gram = df.inner(df) * dg.inner(dg) - df.inner(dg) ** 2
    assert np.max(np.abs(w.inner(w) - gram)) <= 1e-12 * max(1.0, np.max(gram))


def test_wedge_degree_overflow_gives_zero_module(interval3):
    from tamedcalc.fields import wedge
    dx = coordinate_form(interval3, 0)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        w = wedge(dx, dx)
    assert w.is_zero_module and rec
    assert KForm(interval3, 2).is_zero_module


def test_hino_index_examples(interval3, disk2):
    x = interval3.vertices[:, 0]
    assert np.all(hino_index(interval3, [np.sin(3 * x)])[np.abs(np.cos(3 * vertex_to_cell(interval3, x))) > 0.1] == 1)
    X, Y = disk2.vertices.T
    assert np.all(hino_index(disk2, [X, Y]) == 2)
    assert np.all(hino_index(disk2, [X + Y, 3 * (X + Y) + 1]) == 1)
    assert np.all(hino_index(interval3, [x + 1, (x + 1) ** 2]) == 1)


def test_hino_index_of_f_and_f_squared_in_2d():
    # interpolating f^2 breaks exact collinearity by O(h^2) in 2D
    from tamedcalc.dirichlet import cell_differential
    from tamedcalc import mesh_size
    from conftest import observed_orders
    ratios, hs = [], []
    for lv in (1, 2, 3, 4):
        s = build_model("disk", refinement=lv)
        f = s.vertices[:, 0] + 2.0
        assert np.all(hino_index(s, [f, f ** 2], rtol=1e-3) == 1)
        dfs = np.stack([cell_differential(s, g) for g in (f, f ** 2)], axis=1)
        sv = np.linalg.svd(np.einsum("mia,mab,mjb->mij", dfs, s.cell_metric_inv, dfs), compute_uv=False)
        ratios.append(np.max(sv[:, 1] / sv[:, 0]))
        hs.append(mesh_size(s))
    assert min(observed_orders(hs, ratios)) >= 1.8


def test_locality_zeroes_norm_on_masked_cells(disk2):
    X = gradient(disk2, disk2.vertices[:, 0] ** 2)
    mask = disk2.centroids()[:, 0] > 0
    Z = X.restrict(mask)
    assert np.all(norm_cell(Z)[~mask] == 0.0)
    assert np.allclose(norm_cell(Z)[mask], norm_cell(X)[mask])


def test_gradient_norm_matches_carre_du_champ_for_affine(disk2):
    f = 2 * disk2.vertices[:, 0] - disk2.vertices[:, 1]
    assert np.allclose(norm_cell(gradient(disk2, f)) ** 2, 5.0)
    assert np.allclose(carre_du_champ(assemble(disk2), f), 5.0)
