"""Gamma_2, Ricci measure, second fundamental form and curvature inequality checks.

Measures are assembled as vertex numerators (pairings with hat functions)
and split by vertex location.  Pointwise Gamma(f) inside second-order
expressions uses the recovered vertex gradients, which keeps boundary
fluxes first-order accurate.
"""
from dataclasses import dataclass, field

import numpy as np

from .dirichlet import assemble, cell_to_vertex, laplacian
from .fields import VectorField, cell_from_nodal, flat, hino_index, nodal_inner, nodal_norm
from .fieldtypes import field_values
from .first_order import MeasureField, l2_divergence, recovered_gradient, space_of
from .kato import KatoMeasure
from .second_order import (ambient_hessian, bochner_operator, covariant_derivative,
                           exterior_calculus)

EPSILON = 1e-8


def _form(space):
    return assemble(space)


def _kappa(space, kappa):
    return KatoMeasure(space) if kappa is None else kappa


def _nodal_gamma(space, f, g=None):
    Gf = recovered_gradient(space, f)
    Gg = Gf if g is None else recovered_gradient(space, g)
    return np.sum(Gf * Gg, axis=1)


def _cell_gamma(space, f, g):
    from .dirichlet import cell_differential
    df, dg = cell_differential(space, f), cell_differential(space, g)
    return np.einsum("ma,mab,mb->m", df, space.cell_metric_inv, dg)


# -- Gamma_2 --------------------------------------------------------------------

def gamma2(space, f, kappa=None, g=None):
    """Gamma_2^{2 kappa}(f, g) = (1/2) DELTA Gamma(f, g) - kappa Gamma(f, g)
    - (1/2)[Gamma(f, Delta g) + Gamma(g, Delta f)] m."""
    space = space_of(space)
    form = _form(space)
    kappa = _kappa(space, kappa)
    f = field_values(f, space)
    g = f if g is None else field_values(g, space)
    gam = _nodal_gamma(space, f, g)
    lf, lg = recovered_laplacian(space, f), recovered_laplacian(space, g)
    mixed = 0.5 * (_cell_gamma(space, f, lg) + _cell_gamma(space, g, lf))
    N = -0.5 * (form.stiffness @ gam) - kappa.lumped() * gam - cell_to_vertex(space, mixed) * space.interior_mass
    return MeasureField.from_numerator(space, N)


def recovered_laplacian(space, f):
    """Vertex trace of the recovered Hessian.

    This is the m-density of the Laplacian measure, free of the boundary
    flux that the lumped Neumann Laplacian folds into boundary vertices.
    """
    from .second_order import hessian
    return cell_to_vertex(space, hessian(space, f).trace())


def _vertex_hessians(space, f):
    """Mass-averaged ambient Hessians at the vertices, (n, D, D)."""
    return cell_to_vertex(space, ambient_hessian(space, f))


def _hess_hs_vertex(space, f):
    from .second_order import hessian
    return cell_to_vertex(space, hessian(space, f).hs_norm() ** 2)


@dataclass
class CheckReport:
    name: str
    min_interior: float
    min_boundary: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        worst = min(self.min_interior, self.min_boundary)
        return bool(worst >= -self.tolerance)

    def to_dict(self):
        return {"name": self.name, "min_interior": self.min_interior, "min_boundary": self.min_boundary,
                "tolerance": self.tolerance, "passed": self.passed,
                **{k: v for k, v in self.details.items() if np.isscalar(v)}}


def _mins(space, interior, boundary):
    iv = space.interior_vertices()
    mi = float(np.min(interior[iv])) if len(iv) else 0.0
    mb = float(np.min(boundary)) if len(boundary) else 0.0
    return mi, mb


def bochner_check(space, f, kappa=None, tol=0.0):
    """gamma_2(f) - |Hess f|^2 at interior vertices and the boundary part of Gamma_2."""
    space = space_of(space)
    g2 = gamma2(space, f, kappa)
    gap = g2.interior - _hess_hs_vertex(space, f)
    mi, mb = _mins(space, gap, g2.boundary)
    return CheckReport("bochner", mi, mb, tol, {"gap": gap, "gamma2": g2})


def self_improvement_check(space, fs, gs, hs, kappa=None, tol=0.0):
    """Self-improvement inequality with N' = infinity, evaluated at interior vertices.

    [sum_ij <grad f_i, grad h_j><grad g_i, grad h_j> + g_i H[f_i](h_j, h_j)]^2
        <= rho_1[f, g] * sum_jj' <grad h_j, grad h_j'>^2
    """
    space = space_of(space)
    if len(fs) != len(gs):
        raise ValueError("f and g lists must have equal length")
    fs = [field_values(f, space) for f in fs]
    gs = [field_values(g, space) for g in gs]
    hs = [field_values(h, space) for h in hs]
    Gf = [recovered_gradient(space, f) for f in fs]
    Gg = [recovered_gradient(space, g) for g in gs]
    Gh = [recovered_gradient(space, h) for h in hs]
    Hf = [_vertex_hessians(space, f) for f in fs]
    dot = lambda a, b: np.sum(a * b, axis=1)
    hform = lambda H, a, b: np.einsum("ni,nij,nj->n", a, H, b)
    n = len(fs)
    rho = np.zeros(space.n_vertices)
    for i in range(n):
        for k in range(n):
            rho += gs[i] * gs[k] * gamma2(space, fs[i], kappa, fs[k]).interior
            rho += 2 * gs[i] * hform(Hf[i], Gf[k], Gg[k])
            rho += 0.5 * (dot(Gf[i], Gf[k]) * dot(Gg[i], Gg[k]) + dot(Gf[i], Gg[k]) * dot(Gg[i], Gf[k]))
    mixed = np.zeros(space.n_vertices)
    for i in range(n):
        for Gj in Gh:
            mixed += dot(Gf[i], Gj) * dot(Gg[i], Gj) + gs[i] * hform(Hf[i], Gj, Gj)
    h_term = sum(dot(a, b) ** 2 for a in Gh for b in Gh) if hs else np.zeros(space.n_vertices)
    slack = rho * h_term - mixed ** 2
    mi, _ = _mins(space, slack, np.zeros(0))
    return CheckReport("self_improvement", mi, 0.0, tol, {"slack": slack, "rho1": rho, "dominant": rho * h_term})


def trace_dimension_check(space, hs, N, f=None):
    """Trace inequality, Hino rank bound and (for N = dim) tr Hess f = Delta f."""
    space = space_of(space)
    hs = [field_values(h, space) for h in hs]
    G = np.stack([recovered_gradient(space, h) for h in hs], axis=1)       # (n, m, D)
    T = np.einsum("nja,njb->nab", G, G)
    hs_sq = np.einsum("nab,nab->n", T, T)
    tr = np.einsum("naa->n", T)
    slack = hs_sq - tr ** 2 / N
    rank = hino_index(space, hs)
    out = {
        "trace_slack_min": float(slack.min()),
        "max_rank": int(rank.max()),
        "rank_ok": bool(rank.max() <= np.floor(N + 1e-12)),
        "dimension_ok": bool(N >= space.dim),
    }
    out["violation"] = not (out["rank_ok"] and out["dimension_ok"] and out["trace_slack_min"] >= -1e-12 * max(1.0, float(hs_sq.max())))
    if f is not None and abs(N - space.dim) < 1e-12:
        from .second_order import hessian
        form = _form(space)
        trh = cell_to_vertex(space, hessian(space, f).trace())
        iv = space.interior_vertices()
        res = np.abs(trh - laplacian(form, f))[iv]
        out["trace_hessian_residual"] = float(np.sum(space.interior_mass[iv] * res))
    return out


# -- Ricci measure ----------------------------------------------------------------

def _hodge_pairing(space, X, Y):
    """Numerators v -> E_Hodge(phi_v X, Y), with phi_v X cell-averaged."""
    ec = exterior_calculus(space)
    d = space.dim
    cy = ec.cell_to_cochain(flat(Y).values)
    z = ec.K1 @ cy
    ev = ec.cell_edge_values(flat(X).values)
    per_cell = np.sum(z[ec.cell_edges] * ev / ec.edge_valence[ec.cell_edges], axis=1) / (d + 1)
    out = np.zeros(space.n_vertices)
    for a in range(d + 1):
        np.add.at(out, space.cells[:, a], per_cell)
    return out


def hodge_energy(X, Y=None):
    """int <dX, dY> + delta X delta Y dm on the cochain level."""
    ec = exterior_calculus(X.space)
    cx = ec.cell_to_cochain(flat(X).values)
    cy = cx if Y is None else ec.cell_to_cochain(flat(Y).values)
    return float(cx @ (ec.K1 @ cy))


def ricci_numerator(X, Y):
    space = X.space
    form = _form(space)
    xy = np.asarray(nodal_inner(X, Y))
    N = -0.5 * (form.stiffness @ xy)
    N += 0.5 * (_hodge_pairing(space, X, Y) + _hodge_pairing(space, Y, X))
    hs = covariant_derivative(X).hs_inner(covariant_derivative(Y))
    N -= cell_to_vertex(space, hs) * space.interior_mass
    return N


@dataclass
class RicciReport:
    ric_interior: np.ndarray
    ii_boundary: np.ndarray
    tv_norm: float
    residuals: dict
    measure: MeasureField = field(repr=False, default=None)
    kappa_measure: MeasureField = field(repr=False, default=None)
    level: int = None

    def to_dict(self):
        return {"ric_interior": self.ric_interior.tolist(), "ii_boundary": self.ii_boundary.tolist(),
                "tv_norm": self.tv_norm, "residuals": dict(self.residuals), "level": self.level}


def ricci_measure(X, Y, kappa=None, tol=0.0):
    """Ric(X, Y) as a measure; ric is its m-density, II its s-density."""
    space = X.space
    kappa = _kappa(space, kappa)
    ric = MeasureField.from_numerator(space, ricci_numerator(X, Y))
    xy = np.asarray(nodal_inner(X, Y))
    ric_k = MeasureField.from_numerator(space, ric.numerator() - kappa.lumped() * xy)

    def budget(Z):
        return hodge_energy(Z) + float(kappa.lumped() @ np.asarray(nodal_inner(Z, Z)))

    def budget_sharp(Z):
        return hodge_energy(Z) - float(kappa.lumped() @ np.asarray(nodal_inner(Z, Z)))

    total_expected = (hodge_energy(X, Y) - float(np.sum(space.cell_measure * covariant_derivative(X).hs_inner(covariant_derivative(Y))))
                      - float(kappa.lumped() @ xy))
    mi, mb = _mins(space, ric_k.interior, ric_k.boundary)
    tv = ric_k.tv()
    residuals = {
        "global_identity": abs(ric_k.total() - total_expected),
        "lower_bound_slack": min(mi, mb),
        "lower_bound_violation": ric_k.negative_tv(),
        "tv_bound_slack": budget(X) * budget(Y) - tv ** 2,
        "tv_bound_sharp_slack": budget_sharp(X) * budget_sharp(Y) - tv ** 2,
    }
    if not space.has_boundary:
        residuals["weitzenboeck"] = weitzenboeck_residual(X, Y, ric)
    return RicciReport(ric_interior=ric.interior, ii_boundary=ric.boundary, tv_norm=ric.tv(),
                       residuals=residuals, measure=ric, kappa_measure=ric_k, level=space.level)


def ricci_density_ratio_error(X, report):
    """L1 relative deviation of ric(X, X) from |X|^2 over interior vertices."""
    space = X.space
    iv = space.interior_vertices()
    x2 = np.asarray(nodal_inner(X, X))[iv]
    m = space.interior_mass[iv]
    return float(np.sum(m * np.abs(report.ric_interior[iv] - x2)) / np.sum(m * x2))


def n_ricci(X, Y, kappa=None, N=np.inf, tol=None):
    """Ric_N = Ric - R_N m with R_N = (tr nabla X - div X)(tr nabla Y - div Y)/(N - dim_loc).

    A vertex with N = dim_loc is flagged singular when the defect product
    exceeds ``tol``.  The discrete defect is only O(h) small for fields whose
    continuum defect vanishes, so the default is h times the field scale.
    """
    space = X.space
    kappa = _kappa(space, kappa)
    base = ricci_measure(X, Y, kappa)
    dim_loc = cell_to_vertex_max(space, hino_index(space, [space.vertices[:, i] for i in range(space.ambient_dim)]))
    if N < dim_loc.max():
        raise ValueError("N is below the local dimension")

    bmask = space.boundary_mask()

    def traces(Z):
        # the weak divergence density carries the boundary flux at boundary
        # vertices; there the trace of nabla Z stands in for it
        tr = cell_to_vertex(space, covariant_derivative(Z).trace())
        return tr, np.where(bmask, tr, np.asarray(l2_divergence(Z)))

    (trx, divx), (try_, divy) = traces(X), traces(Y)
    dx, dy = trx - divx, try_ - divy
    num = dx * dy
    if tol is None:
        from .model_space import mesh_size
        scale = float(np.max(np.asarray(nodal_norm(X)) * np.asarray(nodal_norm(Y)))) if space.n_vertices else 1.0
        tol = mesh_size(space) * max(scale, 1.0)
    gap = N - dim_loc
    singular = (gap <= 0) & (np.abs(num) > tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        rn = np.where(gap > 0, num / np.where(gap > 0, gap, 1.0), 0.0) if np.isfinite(N) else np.zeros_like(num)
    ric_n = MeasureField.from_numerator(space, base.measure.numerator() - space.interior_mass * rn)
    xy = np.asarray(nodal_inner(X, Y))
    slack = MeasureField.from_numerator(space, ric_n.numerator() - kappa.lumped() * xy)
    mi, mb = _mins(space, slack.interior, slack.boundary)
    residuals = dict(base.residuals)
    residuals["lower_bound_slack"] = min(mi, mb)
    residuals["lower_bound_violation"] = slack.negative_tv()
    residuals["singular_vertices"] = int(np.sum(singular))
    residuals["max_defect"] = float(np.max(np.abs(num))) if len(num) else 0.0
    if X is Y or np.allclose(X.values, Y.values):
        # second inequality: DELTA|X|^2/2 + <X, Box_1 X> >= Ric_N(X, X) + |div X|^2 / N
        lhs = _bochner_lhs_numerator(X)
        div = divx
        extra = 0.0 if not np.isfinite(N) else div ** 2 / N
        second = MeasureField.from_numerator(space, lhs - ric_n.numerator() - space.interior_mass * extra)
        residuals["second_inequality_slack"] = min(_mins(space, second.interior, second.boundary))
        residuals["second_inequality_violation"] = second.negative_tv()
    return RicciReport(ric_interior=ric_n.interior, ii_boundary=ric_n.boundary, tv_norm=ric_n.tv(),
                       residuals=residuals, measure=ric_n, kappa_measure=slack, level=space.level)


def cell_to_vertex_max(space, cellvals):
    out = np.zeros(space.n_vertices)
    for a in range(space.dim + 1):
        np.maximum.at(out, space.cells[:, a], cellvals)
    return out


def _bochner_lhs_numerator(X):
    space = X.space
    form = _form(space)
    x2 = np.asarray(nodal_inner(X, X))
    return -0.5 * (form.stiffness @ x2) + _hodge_pairing(space, X, X)


def vector_q_bochner(X, kappa=None, q=2.0, eps=EPSILON, tol=0.0):
    """DELTA^{q kappa}(|X|^q)/q + |X|^{q-2} <X, Box_1 X> m, regularized at zeros of |X|."""
    if not 1.0 <= q <= 2.0:
        raise ValueError("q must lie in [1, 2]")
    space = X.space
    kappa = _kappa(space, kappa)
    form = _form(space)
    x2 = np.asarray(nodal_inner(X, X))
    u = (x2 + eps) ** (q / 2) - eps ** (q / 2)
    w = (x2 + eps) ** ((q - 2) / 2)
    if q == 2.0:
        Xw = X
    else:
        # weight the field before pairing so the weight never multiplies a
        # cell average that survives at a zero of the vertex field
        nod = w[:, None] * X.nodal()
        Xw = VectorField(space, cell_from_nodal(space, nod), nod)
    N = -(form.stiffness @ u) / q - kappa.lumped() * u + _hodge_pairing(space, Xw, X)
    meas = MeasureField.from_numerator(space, N)
    mi, mb = _mins(space, meas.interior, meas.boundary)
    return CheckReport("vector_q_bochner", mi, mb, tol, {"q": q, "epsilon": eps, "measure": meas})


def weitzenboeck_residual(X, Y, ric=None):
    """L1 norm over interior vertices of ric(X, Y) - <Y, (Box_1 X^flat)^sharp + Bochner X>."""
    space = X.space
    if ric is None:
        ric = MeasureField.from_numerator(space, ricci_numerator(X, Y))
    ec = exterior_calculus(space)
    cx = ec.cell_to_cochain(flat(X).values)
    box1 = ec.cochain_to_vertex(ec.m1_solve(ec.K1 @ cx))
    boch = bochner_operator(space).apply(X).nodal()
    rhs = np.sum(Y.nodal() * (box1 + boch), axis=1)
    iv = space.interior_vertices()
    return float(np.sum(space.interior_mass[iv] * np.abs(ric.interior[iv] - rhs[iv])))
