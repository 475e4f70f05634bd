"""Verification suites run by the experiment runner.

Each suite takes a LevelContext (one model space at one refinement level)
and records entries of four kinds:

exact     relative error of an identity that holds to rounding; passes at <= tol
slack     an inequality slack; passes at >= -tol (tol = C h when discretization-limited)
residual  a nonnegative L1 residual; judged by its convergence order across the ladder
integer   a discrete count compared with its expected value

Discretization-limited inequalities between measures are judged by the total
variation of the negative part of the slack measure, divided by a field
scale, against C h.  Pointwise first-order inequalities are judged by their
pointwise minimum, divided by the sup of the dominating side.
"""
from dataclasses import dataclass, field

import numpy as np

from . import residuals as R
from .curvature import (bochner_check, hodge_energy, n_ricci, ricci_density_ratio_error,
                        ricci_measure, self_improvement_check, trace_dimension_check, vector_q_bochner,
                        _hess_hs_vertex)
from .dirichlet import (assemble, carre_du_champ, cell_differential, energy, heat_flow, integrate,
                        l2_inner, laplacian)
from .fields import KForm, flat, nodal_inner, nodal_norm, norm_cell, sharp, wedge
from .first_order import (MeasureField, differential, gauss_green_residual, gradient, l2_divergence,
                          measure_divergence, normal_component)
from .kato import KatoMeasure, fit_form_bound, kato_constant, pair, schrodinger_operator, schrodinger_semigroup
from .model_space import mesh_size
from .randomfields import smooth_field
from .second_order import (Cochain, bochner_operator, codifferential, covariant_derivative, cup,
                           exterior_calculus, exterior_derivative, harmonic_forms, heat_flow_cochain,
                           heat_flow_form, heat_flow_vector, hessian, hodge_spectrum, inner_cochain,
                           vertex_cochain)

TINY = 1e-300

# exact identities and exact inequalities
EXACT_TOL = 1e-11
EXACT_SLACK_TOL = 1e-8
# default order threshold for residual families
MIN_ORDER = 0.9

# C in the C h tolerance of discretization-limited checks, per suite.  The
# worst observed ratio (violation / h) over ladder 1..4 on all shapes was
# 1.7 for curvature, 0.11 for second_order and 0.29 for flows.
DEFAULT_SLACK_CONSTANTS = {
    "core": 1.0,
    "first_order": 1.0,
    "second_order": 0.5,
    "curvature": 3.0,
    "kato": 1.0,
    "hodge": 1.0,
    "flows": 1.0,
}

BETTI = {
    "interval": [1, 0],
    "rectangle": [1, 0, 0],
    "disk": [1, 0, 0],
    "hemisphere": [1, 0, 0],
    "annulus": [1, 1, 0],
    "sphere": [1, 0, 1],
    "torus": [1, 2, 1],
}

FLOW_TIME = 0.05
KATO_TIMES = (0.1, 0.05, 0.02, 0.01)
KATO_LEVELS = (0.5, 1.0, 2.0)
FORM_BOUND_RHO = 0.5
KATO_MONOTONE_TOL = 1e-6
DENSE_ORACLE_MAX = 2500
CERTIFY_SAMPLES = 1000


@dataclass
class LevelContext:
    space: object
    kappa: object
    seed: int
    suite: str = ""
    tolerances: dict = field(default_factory=dict)
    slack_constants: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)

    def __post_init__(self):
        self.form = assemble(self.space)
        self.h = mesh_size(self.space)

    @property
    def shape(self):
        return self.space.shape

    def fields(self, count, offset=0):
        return [smooth_field(self.space, self.seed, offset + i) for i in range(count)]

    # tolerance lookup: "<suite>.<family>" beats "<family>" beats the default
    def _tol(self, family, default):
        for key in (f"{self.suite}.{family}", family):
            if key in self.tolerances:
                return float(self.tolerances[key])
        return default

    def slack_tol(self, family, scale=1.0):
        C = self.slack_constants.get(self.suite, DEFAULT_SLACK_CONSTANTS.get(self.suite, 1.0))
        return self._tol(family, C * self.h * scale)

    def _add(self, family, kind, value, tolerance, passed, **extra):
        entry = {"suite": self.suite, "family": family, "shape": self.shape, "level": int(self.space.level),
                 "h": float(self.h), "kind": kind, "value": float(value),
                 "tolerance": None if tolerance is None else float(tolerance), "passed": bool(passed)}
        entry.update(extra)
        self.entries.append(entry)

    def exact(self, family, rel_error, tol=None):
        tol = self._tol(family, EXACT_TOL if tol is None else tol)
        v = float(rel_error)
        self._add(family, "exact", v, tol, np.isfinite(v) and v <= tol)

    def slack(self, family, value, tol):
        v = float(value)
        self._add(family, "slack", v, tol, np.isfinite(v) and v >= -tol)

    def exact_slack(self, family, value):
        self.slack(family, value, self._tol(family, EXACT_SLACK_TOL))

    def limited_slack(self, family, value):
        self.slack(family, value, self.slack_tol(family))

    def residual(self, family, value, min_order=MIN_ORDER):
        v = float(value)
        self._add(family, "residual", v, None, bool(np.isfinite(v)),
                  min_order=float(self._tol(family + ".min_order", min_order)))

    def integer(self, family, value, expected):
        self._add(family, "integer", float(value), 0.0, int(value) == int(expected), expected=int(expected))


def rel(err, scale):
    return abs(float(err)) / max(abs(float(scale)), TINY)


def _l2(form, f):
    return float(np.sqrt(max(l2_inner(form, f, f), 0.0)))


def _coords(space):
    V = space.vertices
    return [V[:, i] for i in range(V.shape[1])] + [np.zeros(len(V))] * (3 - V.shape[1])


def _field_scale(space, X):
    """int |X|^2 + |nabla X|^2 dm."""
    x2 = np.asarray(nodal_norm(X)) ** 2
    hs = covariant_derivative(X).hs_norm() ** 2
    return float(np.sum(space.interior_mass * x2) + np.sum(space.cell_measure * hs))


def _function_scale(space, f):
    """int Gamma(f) + |Hess f|^2 dm."""
    form = assemble(space)
    return energy(form, f) + float(np.sum(space.cell_measure * hessian(space, f).hs_norm() ** 2))


def _relative_min(slack, dominant):
    return float(np.min(slack)) / max(float(np.max(np.abs(dominant))), TINY)


# -- core ------------------------------------------------------------------------

def core_suite(ctx):
    S, form = ctx.space, ctx.form
    f, g, k = ctx.fields(3)
    E = energy(form, f, g)
    scale = np.sqrt(energy(form, f) * energy(form, g))
    ctx.exact("energy_carre_du_champ", rel(E - integrate(form, carre_du_champ(form, f, g)), scale))
    ctx.exact("energy_laplacian", rel(E + l2_inner(form, g, laplacian(form, f)), scale))
    K = form.stiffness
    ctx.exact("constant_kernel", rel(np.max(np.abs(K @ np.ones(S.n_vertices))), abs(K).max()))
    off = K.tocoo()
    offdiag = off.data[off.row != off.col]
    ctx.exact("markov_offdiagonal", max(float(np.max(offdiag, initial=0.0)), 0.0) / abs(K).max())
    lf = laplacian(form, f)
    ctx.exact("laplacian_mass", rel(integrate(form, lf), np.sum(S.interior_mass * np.abs(lf))))

    t, s = FLOW_TIME, 0.5 * FLOW_TIME
    Pt = heat_flow(form, f, t)
    ctx.exact("semigroup_law", rel(_l2(form, heat_flow(form, heat_flow(form, f, s), t) - heat_flow(form, f, s + t)),
                                   _l2(form, f)), tol=1e-9)
    ctx.exact("mass_conservation", rel(integrate(form, Pt) - integrate(form, f),
                                       np.sum(S.interior_mass * np.abs(f))), tol=1e-9)
    fp = np.maximum(f, 0.0)
    ctx.exact_slack("positivity", float(np.min(heat_flow(form, fp, t))) / max(fp.max(), TINY))
    ctx.exact_slack("sup_contraction", (np.max(np.abs(f)) - np.max(np.abs(Pt))) / np.max(np.abs(f)))
    nf = _l2(form, f)
    ctx.exact_slack("l2_contraction", (nf - _l2(form, Pt)) / nf)
    ctx.exact_slack("energy_a_priori", (nf ** 2 / (2 * t) - energy(form, Pt)) / (nf ** 2 / (2 * t)))
    ctx.exact_slack("laplacian_a_priori", (nf / (np.e * t) - _l2(form, laplacian(form, Pt))) / (nf / (np.e * t)))

    ctx.residual("gamma_leibniz", R.gamma_leibniz(S, f, g, k))
    ctx.residual("gamma_chain", R.gamma_chain(S, f, g))
    ctx.residual("laplacian_leibniz", R.laplacian_leibniz(S, f, g))
    ctx.residual("laplacian_chain", R.laplacian_chain(S, f))

    if S.shape == "interval":
        L = S.size_params[0]
        vals = form.pair.lowest(4)[0][1:]
        exact_vals = (np.pi * np.arange(1, 4) / L) ** 2
        ctx.residual("neumann_eigenvalues", float(np.max(np.abs(vals - exact_vals) / exact_vals)), min_order=1.9)
    if S.shape == "sphere":
        Rad = S.size_params[0]
        vals = form.pair.lowest(4)[0][1:]
        ctx.residual("sphere_first_eigenvalue", float(np.max(np.abs(vals * Rad ** 2 - 2.0) / 2.0)))


# -- first order --------------------------------------------------------------------

def first_order_suite(ctx):
    S, form = ctx.space, ctx.form
    f, g, k = ctx.fields(3)
    Xf = gradient(S, f)
    iv = S.interior_vertices()
    lf = laplacian(form, f)
    div = np.asarray(l2_divergence(Xf))
    ctx.exact("divergence_of_gradient", rel(np.max(np.abs(div[iv] - lf[iv])) if len(iv) else 0.0, np.max(np.abs(lf))))
    num = measure_divergence(Xf).numerator()
    ctx.exact("measure_divergence_laplacian", rel(np.max(np.abs(num + form.stiffness @ f)),
                                                  np.max(np.abs(form.stiffness @ f))))
    X = Xf.scale(g) + gradient(S, k)
    gg = float(np.sum(S.cell_measure * np.abs(np.sum(cell_differential(S, k) * X.values, axis=1))))
    ctx.exact("gauss_green", rel(gauss_green_residual(X, k), gg))
    M = measure_divergence(X)
    back = MeasureField.from_numerator(S, M.numerator())
    ctx.exact("measure_reconstruction", rel(np.max(np.abs(back.numerator() - M.numerator())),
                                            np.max(np.abs(M.numerator()))))
    ctx.exact("flat_isometry", rel(np.max(np.abs(norm_cell(flat(X)) - norm_cell(X))), np.max(norm_cell(X))))
    ctx.exact("sharp_flat_inverse", rel(np.max(np.abs(sharp(flat(X)).values - X.values)), np.max(np.abs(X.values))))
    A = covariant_derivative(X)
    a2 = A.hs_norm() ** 2
    ctx.exact("sym_asym_decomposition", rel(np.max(np.abs(a2 - A.sym().hs_norm() ** 2 - A.asym().hs_norm() ** 2)),
                                            np.max(a2)))
    if S.dim == 2:
        a, b = KForm(S, 1, cell_differential(S, f)), KForm(S, 1, cell_differential(S, g))
        w = wedge(a, b)
        gram = a.inner(a) * b.inner(b) - a.inner(b) ** 2
        ctx.exact("wedge_gram", rel(np.max(np.abs(w.inner(w) - gram)), np.max(np.abs(gram))))

    ctx.residual("differential_leibniz", R.differential_leibniz(S, f, g))
    ctx.residual("differential_chain", R.differential_chain(S, f))
    if len(iv):
        ctx.residual("divergence_leibniz", R.divergence_leibniz(X, k))
    if S.has_boundary:
        ctx.residual("normal_leibniz", R.normal_leibniz(X, k))

    x, y, z = _coords(S)
    if S.shape == "interval":
        n = np.asarray(normal_component(gradient(S, x)).boundary)
        xb = S.vertices[S.boundary_vertices, 0]
        expected = np.where(xb < 0.5 * S.size_params[0], -1.0, 1.0)
        ctx.exact("interval_normal_component", float(np.max(np.abs(n - expected))))
    if S.shape == "disk":
        Rad = S.size_params[0]
        radial = gradient(S, 0.5 * (x ** 2 + y ** 2))
        n = np.asarray(normal_component(radial).boundary)
        ctx.residual("disk_radial_normal", R.l1_boundary(S, n - Rad) / (2 * np.pi * Rad * Rad))
        n0 = np.asarray(normal_component(Xf).boundary)
        ctx.residual("disk_neumann_trace", R.l1_boundary(S, n0) / max(np.sqrt(energy(form, f)), TINY))


# -- second order --------------------------------------------------------------------

def second_order_suite(ctx):
    S, form = ctx.space, ctx.form
    f, g, k = ctx.fields(3)
    ec = exterior_calculus(S)
    c0 = vertex_cochain(S, f)
    df = exterior_derivative(c0)
    if S.dim == 2:
        ctx.exact("d_squared", rel(np.max(np.abs(ec.d1 @ df.values)), np.max(np.abs(df.values))))
    rng = np.random.Generator(np.random.PCG64([ctx.seed, 101]))
    omega = Cochain(S, 1, rng.normal(size=ec.n_edges))
    lhs = inner_cochain(df, omega)
    rhs = inner_cochain(c0, codifferential(omega))
    ctx.exact("codifferential_adjoint", rel(lhs - rhs, abs(lhs) + abs(rhs)))
    box0 = codifferential(df).values
    lf = np.asarray(laplacian(form, f))
    ctx.exact("hodge_zero_is_minus_laplacian", rel(np.max(np.abs(box0 + lf)), np.max(np.abs(lf))))
    divf = np.asarray(l2_divergence(sharp(differential(S, f))))
    iv = S.interior_vertices()
    if len(iv):
        ctx.exact("codifferential_is_minus_divergence", rel(np.max(np.abs(box0[iv] + divf[iv])),
                                                            np.max(np.abs(divf[iv]))))
    H = hessian(S, f)
    ctx.exact("hessian_symmetry", rel(np.max(np.abs(H.values - H.transpose().values)), np.max(np.abs(H.values))))
    a, b = vertex_cochain(S, f), vertex_cochain(S, g)
    ab = exterior_derivative(cup(a, b)).values
    leib = cup(exterior_derivative(a), b).values + cup(a, exterior_derivative(b)).values
    ctx.exact("cup_leibniz", rel(np.max(np.abs(ab - leib)), np.max(np.abs(ab))))
    if S.dim == 2:
        w = Cochain(S, 1, rng.normal(size=ec.n_edges))
        lhs2 = exterior_derivative(cup(a, w)).values
        rhs2 = cup(exterior_derivative(a), w).values + cup(a, exterior_derivative(w)).values
        ctx.exact("cup_leibniz_one_form", rel(np.max(np.abs(lhs2 - rhs2)), np.max(np.abs(lhs2))))

    X, Y, Z = gradient(S, f), gradient(S, g).scale(k), gradient(S, k)
    ctx.residual("hessian_product", R.hessian_product(S, f, g))
    ctx.residual("hessian_chain", R.hessian_chain(S, f))
    ctx.residual("gradient_product", R.gradient_product(S, f, g))
    ctx.residual("metric_compatibility", R.metric_compatibility(X, Y, Z))
    ctx.residual("torsion", R.torsion(X, Y, k))
    if len(iv):
        ctx.residual("hessian_trace", R.hessian_trace(S, f))
        ctx.residual("codifferential_product", R.codifferential_product(S, f, g))

    for name, V in (("kato_inequality", X), ("kato_inequality_module", Y)):
        hs = covariant_derivative(V).hs_norm()
        dn = R._cell_form_norm(S, cell_differential(S, nodal_norm(V)))
        ctx.limited_slack(name, _relative_min(hs - dn, hs))


# -- curvature --------------------------------------------------------------------

def _negative_tv(space, interior, boundary):
    return float(np.sum(space.interior_mass * np.maximum(-interior, 0.0))
                 + np.sum(space.boundary_mass * np.maximum(-boundary, 0.0)))


def curvature_suite(ctx, count=2):
    S, kappa = ctx.space, ctx.kappa
    fs = ctx.fields(count)
    for i, f in enumerate(fs):
        X = gradient(S, f)
        scale = _field_scale(S, X)
        r = ricci_measure(X, X, kappa)
        total = abs(hodge_energy(X)) + float(np.sum(S.cell_measure * covariant_derivative(X).hs_norm() ** 2))
        ctx.exact("ricci_global_identity", rel(r.residuals["global_identity"], total), tol=1e-9)
        ctx.limited_slack("ricci_lower_bound", -r.residuals["lower_bound_violation"] / scale)
        budget = hodge_energy(X) + pair(kappa, np.asarray(nodal_inner(X, X)))
        ctx.limited_slack("ricci_tv_bound", r.residuals["tv_bound_slack"] / max(budget ** 2, TINY))
        for q in (1.0, 1.5, 2.0):
            rep = vector_q_bochner(X, kappa, q=q)
            ctx.limited_slack(f"q_bochner_{q:g}", -rep.details["measure"].negative_tv() / scale)
        b = bochner_check(S, f, kappa)
        g2 = b.details["gamma2"]
        viol = _negative_tv(S, np.where(S.boundary_mask(), 0.0, b.details["gap"]), g2.boundary)
        ctx.limited_slack("bochner", -viol / max(_function_scale(S, f), TINY))
        nr = n_ricci(X, X, kappa, N=S.dim + 1)
        ctx.limited_slack("n_ricci_lower_bound", -nr.residuals["lower_bound_violation"] / scale)
        ctx.limited_slack("n_ricci_second_inequality", -nr.residuals["second_inequality_violation"] / scale)

    g, h = ctx.fields(2, offset=count)
    si = self_improvement_check(S, [fs[0]], [g], [h, fs[-1]], kappa)
    iv = S.interior_vertices()
    if len(iv):
        m = S.interior_mass[iv]
        neg = float(np.sum(m * np.maximum(-si.details["slack"][iv], 0.0)))
        ctx.limited_slack("self_improvement", -neg / max(float(np.sum(m * np.abs(si.details["dominant"][iv]))), TINY))
    coords = [S.vertices[:, i] for i in range(S.ambient_dim)]
    tr = trace_dimension_check(S, coords + fs, N=S.dim)
    ctx.exact_slack("trace_inequality", tr["trace_slack_min"])
    ctx.integer("hino_index", tr["max_rank"], S.dim)

    x, y, z = _coords(S)
    if S.shape == "rectangle":
        quad = 0.7 * x ** 2 - 0.4 * x * y + 0.3 * y ** 2 + x
        gap = bochner_check(S, quad).details["gap"]
        iv = S.interior_vertices()
        ctx.exact_slack("bochner_quadratic", float(np.min(gap[iv])) / max(float(np.max(_hess_hs_vertex(S, quad))), TINY))
    if S.shape == "sphere":
        X = gradient(S, x * y + z)
        ctx.residual("sphere_ricci_ratio", ricci_density_ratio_error(X, ricci_measure(X, X, kappa)))
        ctx.residual("sphere_weitzenboeck", ricci_measure(X, X, kappa).residuals["weitzenboeck"])
    if S.shape == "disk":
        Rad = S.size_params[0]
        X = gradient(S, 3 * x / Rad - x * (x ** 2 + y ** 2) / Rad ** 3)
        r = ricci_measure(X, X, kappa)
        x2 = np.asarray(nodal_inner(X, X))[S.boundary_vertices]
        err = np.sum(S.boundary_mass * np.abs(r.ii_boundary - x2 / Rad)) / np.sum(S.boundary_mass * x2 / Rad)
        ctx.residual("disk_second_fundamental_form", err)
    if S.shape == "torus":
        Lx, Ly = S.size_params
        X = gradient(S, np.sin(2 * np.pi * x / Lx) * np.cos(2 * np.pi * y / Ly))
        ctx.residual("torus_weitzenboeck", ricci_measure(X, X, kappa).residuals["weitzenboeck"])


# -- Kato class ---------------------------------------------------------------------

def _dense_form_bound(form, kappa, rho):
    s = 1.0 / np.sqrt(form.mass)
    A = np.diag(kappa.abs().lumped()) - rho * form.stiffness.toarray()
    return float(np.linalg.eigvalsh(s[:, None] * A * s[None, :])[-1])


def _kato_measures(ctx):
    S = ctx.space
    out = []
    if S.has_boundary:
        nb = len(S.boundary_vertices)
        out += [(f"boundary_{l:g}", KatoMeasure(S, None, np.full(nb, l))) for l in KATO_LEVELS]
    if not ctx.kappa.is_zero():
        out.append(("taming", ctx.kappa))
    return out


def kato_suite(ctx):
    S, form = ctx.space, ctx.form
    f = ctx.fields(1)[0]
    rng = np.random.Generator(np.random.PCG64([ctx.seed, 202]))
    for name, kap in _kato_measures(ctx):
        for q in (1.0, 1.5):
            op = schrodinger_operator(form, kap, q)
            e = op.energy(f)
            ctx.exact(f"schrodinger_energy_{name}", rel(e - energy(form, f) - q * pair(kap, f * f), abs(e)))
            ctx.exact(f"schrodinger_generator_{name}", rel(e + l2_inner(form, f, op.apply(f)), abs(e)), tol=1e-10)
        prof = kato_constant(form, kap, KATO_TIMES)
        fam = f"kato_profile_monotone_{name}"
        ctx.slack(fam, float(np.min(prof[:-1] - prof[1:])), ctx._tol(fam, KATO_MONOTONE_TOL))
        expo = np.polyfit(np.log(KATO_TIMES), np.log(np.maximum(prof, TINY)), 1)[0]
        ctx.slack(f"kato_profile_vanishing_{name}", expo, 0.0)
        bound = fit_form_bound(form, kap, FORM_BOUND_RHO)
        if S.n_vertices <= DENSE_ORACLE_MAX:
            oracle = _dense_form_bound(form, kap, FORM_BOUND_RHO)
            ctx.exact(f"form_bound_oracle_{name}", rel(bound.alpha_prime - oracle, max(abs(oracle), 1.0)), tol=1e-6)
        F = rng.normal(size=(S.n_vertices, CERTIFY_SAMPLES))
        F[:, : CERTIFY_SAMPLES // 2] = heat_flow(form, F[:, : CERTIFY_SAMPLES // 2], 1e-3)
        lhs = kap.abs().lumped() @ (F * F)
        en = np.einsum("ij,ij->j", F, form.stiffness @ F)
        nm = form.mass @ (F * F)
        rhs = FORM_BOUND_RHO * en + bound.alpha_prime * nm
        ctx.exact_slack(f"form_bound_certified_{name}", float(np.min((rhs - lhs) / (en + nm))))


# -- Hodge theory ---------------------------------------------------------------------

def hodge_suite(ctx):
    S, form, kappa = ctx.space, ctx.form, ctx.kappa
    f = ctx.fields(1)[0]
    ec = exterior_calculus(S)
    rng = np.random.Generator(np.random.PCG64([ctx.seed, 303]))
    w = Cochain(S, 1, rng.normal(size=ec.n_edges))
    c0 = vertex_cochain(S, f)
    lhs, rhs = inner_cochain(exterior_derivative(c0), w), inner_cochain(c0, codifferential(w))
    ctx.exact("d0_adjoint", rel(lhs - rhs, abs(lhs) + abs(rhs)))
    if S.dim == 2:
        eta = Cochain(S, 2, rng.normal(size=S.n_cells))
        lhs, rhs = inner_cochain(exterior_derivative(w), eta), inner_cochain(w, codifferential(eta))
        ctx.exact("d1_adjoint", rel(lhs - rhs, abs(lhs) + abs(rhs)), tol=1e-9)
    t = FLOW_TIME
    a = heat_flow_cochain(exterior_derivative(c0), t).values
    b = ec.d0 @ np.asarray(heat_flow(form, f, t))
    ctx.exact("heat_flow_commutation", rel(np.max(np.abs(a - b)), np.max(np.abs(b))), tol=1e-8)
    if S.shape in BETTI:
        for k, beta in enumerate(BETTI[S.shape]):
            res = harmonic_forms(S, k)
            ctx.integer(f"harmonic_dimension_{k}", len(res.basis), beta)
    box1 = float(hodge_spectrum(S, 1, 1)[0][0])
    schr = float(schrodinger_operator(form, kappa, 1.0).spectrum(1)[0][0])
    ctx.limited_slack("spectral_bottom_forms", (box1 - schr) / max(abs(box1), abs(schr), 1.0))


# -- heat flows ---------------------------------------------------------------------

def flows_suite(ctx):
    S, form, kappa = ctx.space, ctx.form, ctx.kappa
    t = FLOW_TIME
    f, g = ctx.fields(2)
    X = gradient(S, f).scale(1.0 + 0.5 * np.tanh(g))
    nX = np.asarray(nodal_norm(X))
    dom = np.asarray(heat_flow(form, nX, t)) - np.asarray(nodal_norm(heat_flow_vector(X, t)))
    ctx.limited_slack("vector_domination", _relative_min(dom, nX))
    w = differential(S, f)
    nw = np.asarray(nodal_norm(w))
    hsu = np.asarray(schrodinger_semigroup(form, kappa, 1.0, nw, t)) - np.asarray(nodal_norm(heat_flow_form(w, t)))
    ctx.limited_slack("hsu_forms", _relative_min(hsu, nw))
    ng = np.asarray(nodal_norm(gradient(S, f)))
    gc = np.asarray(schrodinger_semigroup(form, kappa, 1.0, ng, t)) - np.asarray(nodal_norm(gradient(S, heat_flow(form, f, t))))
    ctx.limited_slack("gradient_contraction", _relative_min(gc, ng))
    lap = float(form.pair.lowest(1)[0][0])
    boch = float(bochner_operator(S).spectrum(1)[0][0])
    ctx.exact_slack("spectral_bottom_vectors", (boch - lap) / max(abs(boch), 1.0))


SUITES = {
    "core": (core_suite, "Dirichlet form identities, heat semigroup, Gamma and Laplacian calculus rules, Neumann spectra"),
    "first_order": (first_order_suite, "differential, gradient, divergence measure, normal component and Gauss-Green formula"),
    "second_order": (second_order_suite, "Hessian, covariant derivative, exterior calculus rules and the Kato inequality"),
    "curvature": (curvature_suite, "Gamma_2 and Bochner inequalities, Ricci measure with its density and second fundamental form II, N-Ricci, q-Bochner"),
    "kato": (kato_suite, "Kato constant profile K(t), Schroedinger forms and form bounds of taming measures"),
    "hodge": (hodge_suite, "Hodge theorem (harmonic form dimensions), d/delta adjointness, heat flow commutation, spectral bottoms"),
    "flows": (flows_suite, "vector and form heat flow domination, HSU inequality, gradient contraction, Bochner spectral bottom"),
}


def list_suites():
    return [(name, desc) for name, (_, desc) in SUITES.items()]


def run_suite(name, ctx):
    fn = SUITES[name][0]
    ctx.suite = name
    start = len(ctx.entries)
    try:
        fn(ctx)
    except Exception as exc:      # recorded per entry; the run continues
        ctx._add("suite_error", "error", float("nan"), None, False, message=f"{type(exc).__name__}: {exc}")
    return ctx.entries[start:]
