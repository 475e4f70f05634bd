"""Calculus-rule residuals measured in L1, used by the suites and the tests.

Every function returns a nonnegative scalar that vanishes in the continuum
and should shrink under refinement.  Cell quantities are integrated against
the cell measure, vertex quantities against the lumped interior mass, and
boundary quantities against the boundary mass.
"""
import numpy as np

from .dirichlet import assemble, carre_du_champ, cell_differential, cell_to_vertex, laplacian, vertex_to_cell
from .fields import OneForm, apply_form, inner_cell, nodal_inner, tensor_product
from .fieldtypes import field_values
from .first_order import differential, gradient, l2_divergence, normal_component, recovered_gradient
from .second_order import directional_derivative, hessian, lie_bracket


def l1_vertex(space, v, interior_only=False):
    v = np.abs(np.asarray(v, dtype=float))
    m = space.interior_mass
    if interior_only:
        iv = space.interior_vertices()
        return float(np.sum(m[iv] * v[iv]))
    return float(np.sum(m * v))


def l1_cell(space, c):
    c = np.abs(np.asarray(c, dtype=float))
    return float(np.sum(space.cell_measure * c))


def l1_boundary(space, b):
    return float(np.sum(space.boundary_mass * np.abs(b)))


def _cell_form_norm(space, w):
    return np.sqrt(np.maximum(np.einsum("ma,mab,mb->m", w, space.cell_metric_inv, w), 0.0))


def _cell_vector_norm(space, x):
    return np.sqrt(np.maximum(np.einsum("ma,mab,mb->m", x, space.cell_metric, x), 0.0))


# -- Dirichlet form ---------------------------------------------------------------

def gamma_leibniz(space, f, g, h):
    """Gamma(fg, h) - f Gamma(g, h) - g Gamma(f, h)."""
    form = assemble(space)
    r = (carre_du_champ(form, f * g, h) - f * carre_du_champ(form, g, h)
         - g * carre_du_champ(form, f, h))
    return l1_vertex(space, r)


def gamma_chain(space, f, g, phi=np.sin, dphi=np.cos):
    """Gamma(phi(f), g) - phi'(f) Gamma(f, g)."""
    form = assemble(space)
    r = carre_du_champ(form, phi(f), g) - dphi(f) * carre_du_champ(form, f, g)
    return l1_vertex(space, r)


def laplacian_leibniz(space, f, g):
    """Delta(fg) - f Delta g - g Delta f - 2 Gamma(f, g), at interior vertices."""
    form = assemble(space)
    r = (laplacian(form, f * g) - f * laplacian(form, g) - g * laplacian(form, f)
         - 2 * carre_du_champ(form, f, g))
    return l1_vertex(space, r, interior_only=True)


def laplacian_chain(space, f, phi=np.sin, dphi=np.cos, ddphi=lambda x: -np.sin(x)):
    """Delta(phi(f)) - phi'(f) Delta f - phi''(f) Gamma(f), at interior vertices."""
    form = assemble(space)
    r = laplacian(form, phi(f)) - dphi(f) * laplacian(form, f) - ddphi(f) * carre_du_champ(form, f)
    return l1_vertex(space, r, interior_only=True)


# -- first order ----------------------------------------------------------------

def differential_leibniz(space, f, g):
    """d(fg) - f dg - g df, per cell."""
    w = (cell_differential(space, f * g) - vertex_to_cell(space, f)[:, None] * cell_differential(space, g)
         - vertex_to_cell(space, g)[:, None] * cell_differential(space, f))
    return l1_cell(space, _cell_form_norm(space, w))


def differential_chain(space, f, phi=np.sin, dphi=np.cos):
    """d(phi(f)) - phi'(f) df, per cell."""
    w = cell_differential(space, phi(f)) - vertex_to_cell(space, dphi(f))[:, None] * cell_differential(space, f)
    return l1_cell(space, _cell_form_norm(space, w))


def divergence_leibniz(X, f):
    """div(fX) - f div X - df(X), at interior vertices."""
    space = X.space
    f = field_values(f, space)
    dfx = cell_to_vertex(space, apply_form(differential(space, f), X))
    r = l2_divergence(X.scale(f)) - f * l2_divergence(X) - dfx
    return l1_vertex(space, r, interior_only=True)


def normal_leibniz(X, f):
    """n(fX) - f nX on the boundary."""
    space = X.space
    f = field_values(f, space)
    bv = space.boundary_vertices
    r = normal_component(X.scale(f)).boundary - f[bv] * normal_component(X).boundary
    return l1_boundary(space, r)


# -- Hessian and covariant derivative ------------------------------------------------

def _dd(space, f, g):
    """df (x) dg + dg (x) df as a covariant tensor."""
    df, dg = differential(space, f), differential(space, g)
    t = tensor_product(df, dg)
    return t + t.transpose()


def hessian_product(space, f, g):
    """Hess(fg) - f Hess g - g Hess f - (df (x) dg + dg (x) df)."""
    r = hessian(space, f * g) - hessian(space, g).scale(f) - hessian(space, f).scale(g) - _dd(space, f, g)
    return l1_cell(space, r.hs_norm())


def hessian_chain(space, f, phi=np.sin, dphi=np.cos, ddphi=lambda x: -np.sin(x)):
    """Hess(phi(f)) - phi'(f) Hess f - phi''(f) df (x) df."""
    df = differential(space, f)
    r = hessian(space, phi(f)) - hessian(space, f).scale(dphi(f)) - tensor_product(df, df).scale(ddphi(f))
    return l1_cell(space, r.hs_norm())


def gradient_product(space, f, g):
    """d Gamma(f, g) - Hess f(grad g, .) - Hess g(grad f, .)."""
    gam = np.sum(recovered_gradient(space, f) * recovered_gradient(space, g), axis=1)
    dgam = cell_differential(space, gam)
    Xf, Xg = gradient(space, f), gradient(space, g)
    Hf, Hg = hessian(space, f).values, hessian(space, g).values
    r = dgam - np.einsum("ma,mab->mb", Xg.values, Hf) - np.einsum("ma,mab->mb", Xf.values, Hg)
    return l1_cell(space, _cell_form_norm(space, r))


def metric_compatibility(X, Y, Z):
    """d<X, Y>(Z) - <nabla_Z X, Y> - <X, nabla_Z Y>, per cell."""
    space = X.space
    xy = nodal_inner(X, Y)
    lhs = np.sum(cell_differential(space, xy) * Z.values, axis=1)
    r = lhs - inner_cell(directional_derivative(X, Z), Y) - inner_cell(X, directional_derivative(Y, Z))
    return l1_cell(space, r)


def torsion(X, Y, f):
    """X(Yf) - Y(Xf) - df([X, Y]), per cell."""
    space = X.space
    G = recovered_gradient(space, f)
    yf = np.sum(G * Y.nodal(), axis=1)
    xf = np.sum(G * X.nodal(), axis=1)
    dyf, dxf = cell_differential(space, yf), cell_differential(space, xf)
    r = (np.sum(dyf * X.values, axis=1) - np.sum(dxf * Y.values, axis=1)
         - apply_form(differential(space, f), lie_bracket(X, Y)))
    return l1_cell(space, r)


def hessian_trace(space, f):
    """tr Hess f - Delta f at interior vertices."""
    trh = cell_to_vertex(space, hessian(space, f).trace())
    return l1_vertex(space, trh - laplacian(assemble(space), f), interior_only=True)


def codifferential_product(space, f, g):
    """delta(g df) + <grad g, grad f> + g Delta f at interior vertices."""
    from .second_order import codifferential, to_cochain
    w = OneForm(space, vertex_to_cell(space, g)[:, None] * cell_differential(space, f))
    val = codifferential(to_cochain(w)).values
    form = assemble(space)
    target = -(carre_du_champ(form, f, g) + g * laplacian(form, f))
    return l1_vertex(space, val - target, interior_only=True)


def tensor_leibniz(space, f, g):
    """nabla(df (x) dg) - Hess f (x) dg - df (x) Hess g, per cell (HS norm of the 3-tensor)."""
    from .second_order import covariant_derivative, tensor_covariant_derivative
    Gf, Gg = recovered_gradient(space, f), recovered_gradient(space, g)
    R = tensor_covariant_derivative(space, np.einsum("ni,nj->nij", Gf, Gg))
    J, C = space.edge_matrix, space.cells
    wf = np.einsum("mi,mia->ma", Gf[C].mean(axis=1), J)
    wg = np.einsum("mi,mia->ma", Gg[C].mean(axis=1), J)
    Hf = hessian(space, f).values
    Hg = covariant_derivative(gradient(space, g)).values
    D = R - np.einsum("mua,mb->muab", Hf, wg) - np.einsum("ma,mub->muab", wf, Hg)
    Gi = space.cell_metric_inv
    n2 = np.einsum("muab,mvcd,muv,mac,mbd->m", D, D, Gi, Gi, Gi)
    return l1_cell(space, np.sqrt(np.maximum(n2, 0.0)))


def _edge_form(ec, u, v):
    """Edge integrals of u dv (midpoint rule)."""
    a, b = ec.edges[:, 0], ec.edges[:, 1]
    return 0.5 * (u[a] + u[b]) * (v[b] - v[a])


def hodge_regular_form(space, f, g, tests):
    """Weak residual of Box_1(g df) + g d Delta f + Delta g df + 2 Hess f(grad g, .).

    Paired with each test form eta = u dv from ``tests`` (pairs (u, v)); the
    pairing needs eta compactly supported in the interior unless the space
    has no boundary.  Returns the largest residual relative to the sum of
    the absolute values of its four terms.
    """
    from .dirichlet import energy
    from .second_order import Cochain, codifferential, exterior_calculus
    form = assemble(space)
    ec = exterior_calculus(space)
    f, g = field_values(f, space), field_values(g, space)
    omega = _edge_form(ec, g, f)
    df = OneForm(space, cell_differential(space, f))
    grad_g = np.einsum("mab,mb->ma", space.cell_metric_inv, cell_differential(space, g))
    hess_g = OneForm(space, np.einsum("ma,mab->mb", grad_g, hessian(space, f).values))
    worst = 0.0
    for u, v in tests:
        u, v = field_values(u, space), field_values(v, space)
        eta = OneForm(space, vertex_to_cell(space, u)[:, None] * cell_differential(space, v))
        terms = [
            float(omega @ (ec.K1 @ _edge_form(ec, u, v))),
            -energy(form, f, codifferential(Cochain(space, 1, _edge_form(ec, g * u, v))).values),
            -energy(form, g, cell_to_vertex(space, inner_cell(df, eta))),
            2.0 * float(np.sum(space.cell_measure * inner_cell(hess_g, eta))),
        ]
        scale = sum(abs(t) for t in terms)
        if scale > 0:
            worst = max(worst, abs(sum(terms)) / scale)
    return worst
