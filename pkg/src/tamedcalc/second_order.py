"""Hessian, covariant derivative, exterior calculus and the second-order Laplacians.

Two 1-form representations coexist: per-cell chart covectors (module layer)
and edge cochains (exterior calculus, so that d o d = 0 holds exactly).
Conversion: cell -> cochain averages the edge integrals over adjacent
cells; cochain -> cell takes the Whitney form at the barycenter.
"""
import weakref
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dirichlet import SymmetricPair, assemble, cell_differential, cell_to_vertex, vertex_to_cell
from .fields import KForm, OneForm, TensorField2, VectorField, cell_from_nodal, project_tangent
from .fieldtypes import field_values
from .first_order import recovered_gradient, space_of

_CACHE = weakref.WeakKeyDictionary()


def _cached(space, key, build):
    store = _CACHE.setdefault(space, {})
    if key not in store:
        store[key] = build()
    return store[key]


def _lambda_grads(d):
    """Chart components of d(lambda_p) for the local vertices p = 0..d, shape (d+1, d)."""
    return np.vstack([-np.ones((1, d)), np.eye(d)])


# -- Hessian ----------------------------------------------------------------------

def _ambient_cell_gradient(space, u):
    """Cellwise tangent gradients as ambient vectors: (m, D) or (m, D, k)."""
    du = cell_differential(space, u)
    P = np.einsum("mka,mab->mkb", space.edge_matrix, space.cell_metric_inv)
    if du.ndim == 2:
        return np.einsum("mkb,mb->mk", P, du)
    return np.einsum("mkb,mbj->mkj", P, du)


def ambient_hessian(space, f):
    """Per-cell ambient matrices of Hess f from the pre-Hessian on coordinates.

    With Gamma(f, x_j) and Gamma(x_i, x_j) taken from the vertex
    representatives, H_ij = (1/2)[<grad x_i, grad Gamma(f, x_j)>
    + <grad x_j, grad Gamma(f, x_i)> - <grad f, grad Gamma(x_i, x_j)>].
    """
    space = space_of(space)
    f = field_values(f, space)
    n, D = space.n_vertices, space.ambient_dim
    grad_nodal = recovered_gradient(space, f)
    a_f = _ambient_cell_gradient(space, f)
    a_phi = _ambient_cell_gradient(space, grad_nodal)
    H = 0.5 * (a_phi + np.swapaxes(a_phi, 1, 2))
    if space.vertex_normals is not None:
        a_psi = _ambient_cell_gradient(space, _tangent_projectors(space).reshape(n, D * D))
        a_psi = a_psi.reshape(-1, D, D, D)
        H = H - 0.5 * np.einsum("mk,mkij->mij", a_f, a_psi)
    return H


def _tangent_projectors(space):
    B = space.tangent_frames
    return np.einsum("nia,nja->nij", B, B)


def hessian(space, f):
    """Hess f as a covariant tensor in chart components (symmetric by construction)."""
    space = space_of(space)
    H = ambient_hessian(space, f)
    J = space.edge_matrix
    return TensorField2(space, np.einsum("mia,mij,mjb->mab", J, H, J), "covariant")


def coordinate_hessians(space):
    """Hess x_i of the ambient coordinates, (D, m, d, d); zero on flat spaces."""
    def build():
        D, m, d = space.ambient_dim, space.n_cells, space.dim
        if space.vertex_normals is None:
            return np.zeros((D, m, d, d))
        return np.stack([hessian(space, space.vertices[:, i]).values for i in range(D)])
    return _cached(space, "coord_hess", build)


# -- covariant derivative ------------------------------------------------------------

def _covariant_coefficients(space):
    """coef[T, a, b, p, k]: weight of X_{cells[T, p], k} in (nabla X)_T[a, b]."""
    def build():
        d = space.dim
        J = space.edge_matrix
        lam = _lambda_grads(d)                      # (d+1, d)
        coef = np.einsum("pa,mkb->mabpk", lam, J)
        Hc = coordinate_hessians(space)             # (D, m, d, d)
        coef = coef + np.einsum("kmab->mabk", Hc)[:, :, :, None, :] / (d + 1)
        return coef
    return _cached(space, "cov_coef", build)


def covariant_derivative(X):
    """nabla X as a covariant 2-tensor: A(u, w) = <nabla_u X, w>, direction first."""
    space = X.space
    Xn = X.nodal()
    coef = _covariant_coefficients(space)
    vals = np.einsum("mabpk,mpk->mab", coef, Xn[space.cells])
    return TensorField2(space, vals, "covariant")


def directional_derivative(X, Z):
    """nabla_Z X as a vector field (per cell)."""
    A = covariant_derivative(X).values
    comp = np.einsum("ma,mab->mb", Z.values, A)
    return VectorField(X.space, np.einsum("mab,mb->ma", X.space.cell_metric_inv, comp))


def lie_bracket(X, Y):
    """[X, Y] = nabla_X Y - nabla_Y X."""
    return directional_derivative(Y, X) - directional_derivative(X, Y)


def tensor_covariant_derivative(space, T):
    """nabla T for a covariant 2-tensor given by ambient vertex matrices T (n, D, D).

    Returns per-cell components R[u, a, b] = (nabla_u T)(e_a, e_b).
    """
    space = space_of(space)
    J = space.edge_matrix
    C = space.cells
    dT = T[C[:, 1:]] - T[C[:, [0]]]                  # (m, d, D, D)
    R = np.einsum("muij,mia,mjb->muab", dT, J, J)
    Tbar = T[C].mean(axis=1)
    Hc = coordinate_hessians(space)
    if np.any(Hc):
        R = R + np.einsum("mij,imua,mjb->muab", Tbar, Hc, J)
        R = R + np.einsum("mij,mia,jmub->muab", Tbar, J, Hc)
    return R


# -- Bochner Laplacian ------------------------------------------------------------

class BochnerOperator:
    """-nabla^* nabla on vertex vector fields in orthonormal tangent frames."""

    def __init__(self, space, eigen_max=None):
        self.space = space
        n, d, D, m = space.n_vertices, space.dim, space.ambient_dim, space.n_cells
        coef = _covariant_coefficients(space)
        C = space.cells
        rows = np.broadcast_to(np.arange(m * d * d).reshape(m, d, d, 1, 1), coef.shape)
        cols = np.broadcast_to((C[:, None, None, :, None] * D + np.arange(D)), coef.shape)
        L = sp.csr_matrix((coef.ravel(), (rows.ravel(), cols.ravel())), shape=(m * d * d, n * D))
        Bf = space.tangent_frames
        brow = (np.arange(n)[:, None, None] * D + np.arange(D)[None, :, None])
        bcol = (np.arange(n)[:, None, None] * d + np.arange(d)[None, None, :])
        frame = sp.csr_matrix((Bf.ravel(), (np.broadcast_to(brow, Bf.shape).ravel(),
                                            np.broadcast_to(bcol, Bf.shape).ravel())), shape=(n * D, n * d))
        Gi = space.cell_metric_inv
        W = np.einsum("mac,mbd->mabcd", Gi, Gi).reshape(m, d * d, d * d) * space.cell_measure[:, None, None]
        wr = np.arange(m)[:, None, None] * d * d + np.arange(d * d)[None, :, None]
        wc = np.arange(m)[:, None, None] * d * d + np.arange(d * d)[None, None, :]
        Wm = sp.csr_matrix((W.ravel(), (np.broadcast_to(wr, W.shape).ravel(),
                                        np.broadcast_to(wc, W.shape).ravel())), shape=(m * d * d,) * 2)
        self.gradient_map = (L @ frame).tocsr()
        S = (self.gradient_map.T @ Wm @ self.gradient_map).tocsr()
        self.stiffness = 0.5 * (S + S.T)
        self.mass = np.repeat(space.interior_mass, d)
        kw = {} if eigen_max is None else {"eigen_max": eigen_max}
        self.pair = SymmetricPair(self.stiffness, self.mass, **kw)

    def coefficients(self, X):
        return np.einsum("nka,nk->na", self.space.tangent_frames, X.nodal()).ravel()

    def field(self, alpha):
        nod = np.einsum("nka,na->nk", self.space.tangent_frames, alpha.reshape(self.space.n_vertices, -1))
        return VectorField(self.space, cell_from_nodal(self.space, nod), nod)

    def apply(self, X):
        alpha = self.coefficients(X)
        return self.field(-(self.stiffness @ alpha) / self.mass)

    def energy(self, X, Y=None):
        a = self.coefficients(X)
        b = a if Y is None else self.coefficients(Y)
        return float(a @ (self.stiffness @ b))

    def semigroup(self, X, t):
        if t < 0:
            raise ValueError("heat flow needs t >= 0")
        return self.field(self.pair.exp_apply(self.coefficients(X), t))

    def spectrum(self, count):
        return self.pair.lowest(count)


def bochner_operator(space):
    return _cached(space, "bochner", lambda: BochnerOperator(space))


def bochner_laplacian(X):
    return bochner_operator(X.space).apply(X)


def heat_flow_vector(X, t):
    """H_t X = exp(t Bochner) X."""
    if t < 0:
        raise ValueError("heat_flow_vector needs t >= 0")
    return bochner_operator(X.space).semigroup(X, t)


# -- discrete exterior calculus ------------------------------------------------------

class ExteriorCalculus:
    """Incidence matrices and Whitney masses on a simplicial mesh."""

    def __init__(self, space):
        self.space = space
        d, m, n = space.dim, space.n_cells, space.n_vertices
        C = space.cells
        self.local_edges = list(combinations(range(d + 1), 2))
        a = C[:, [i for i, _ in self.local_edges]]
        b = C[:, [j for _, j in self.local_edges]]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = lo * n + hi
        uniq, inv = np.unique(keys.ravel(), return_inverse=True)
        self.edges = np.stack([uniq // n, uniq % n], axis=1)
        self.cell_edges = inv.reshape(m, -1)
        self.cell_edge_sign = np.where(a < b, 1.0, -1.0)
        ne = len(self.edges)
        self.n_edges = ne
        self.edge_valence = np.bincount(self.cell_edges.ravel(), minlength=ne).astype(float)

        r = np.repeat(np.arange(ne), 2)
        self.d0 = sp.csr_matrix((np.tile([-1.0, 1.0], ne), (r, self.edges.ravel())), shape=(ne, n))
        if d == 2:
            face_sign = np.array([1.0, -1.0, 1.0])      # boundary of [0,1,2]: [0,1] - [0,2] + [1,2]
            vals = (self.cell_edge_sign * face_sign).ravel()
            self.d1 = sp.csr_matrix((vals, (np.repeat(np.arange(m), 3), self.cell_edges.ravel())), shape=(m, ne))
        else:
            self.d1 = None

        self.M0 = space.interior_mass.copy()
        self.M1 = self._whitney_mass()
        if d == 2:
            self.M2 = space.cell_measure / space.cell_volume ** 2
        self._m1_lu = None
        self._pairs = {}

    def _whitney_mass(self):
        sp_ = self.space
        d, m = sp_.dim, sp_.n_cells
        lam = _lambda_grads(d)
        S = np.einsum("pa,mab,qb->mpq", lam, sp_.cell_metric_inv, lam)
        I = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
        I = sp_.cell_measure[:, None, None] * I
        ne = len(self.local_edges)
        loc = np.zeros((m, ne, ne))
        for r_, (i, j) in enumerate(self.local_edges):
            for c_, (k, l) in enumerate(self.local_edges):
                loc[:, r_, c_] = (I[:, i, k] * S[:, j, l] - I[:, i, l] * S[:, j, k]
                                  - I[:, j, k] * S[:, i, l] + I[:, j, l] * S[:, i, k])
        sg = self.cell_edge_sign
        loc = loc * sg[:, :, None] * sg[:, None, :]
        rows = np.repeat(self.cell_edges, ne, axis=1).ravel()
        cols = np.tile(self.cell_edges, (1, ne)).ravel()
        M = sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(self.n_edges,) * 2)
        return 0.5 * (M + M.T)

    def m1_solve(self, y):
        if self._m1_lu is None:
            self._m1_lu = spla.splu(sp.csc_matrix(self.M1))
        return self._m1_lu.solve(y)

    @property
    def K1(self):
        """Stiffness of the 1-form Hodge Laplacian: Box_1 = M1^{-1} K1."""
        if "K1" not in self._pairs:
            A = self.M1 @ self.d0
            K = A @ sp.diags(1.0 / self.M0) @ A.T
            if self.d1 is not None:
                K = K + self.d1.T @ sp.diags(self.M2) @ self.d1
            self._pairs["K1"] = (0.5 * (K + K.T)).tocsr()
        return self._pairs["K1"]

    def pair(self, k):
        """Symmetric pencil whose kernel is the harmonic k-cochains."""
        if k not in self._pairs:
            if k == 0:
                p = SymmetricPair(assemble(self.space).stiffness, self.M0)
            elif k == 1:
                p = SymmetricPair(self.K1, self.M1, eigen_max=1500)
            else:
                # same kernel as d1 M1^{-1} d1^T M2, with M1 replaced by its diagonal
                A = sp.diags(self.M2) @ self.d1
                p = SymmetricPair(A @ sp.diags(1.0 / self.M1.diagonal()) @ A.T, self.M2)
            self._pairs[k] = p
        return self._pairs[k]

    # conversions ---------------------------------------------------------------
    def cell_to_cochain(self, w):
        """Edge integrals of a per-cell 1-form, averaged over adjacent cells."""
        w = np.asarray(w, dtype=float)
        wz = np.hstack([np.zeros((len(w), 1)), w])      # omega(e_0) := 0 at the base vertex
        loc = np.stack([wz[:, j] - wz[:, i] for i, j in self.local_edges], axis=1) * self.cell_edge_sign
        out = np.bincount(self.cell_edges.ravel(), loc.ravel(), minlength=self.n_edges)
        return out / self.edge_valence

    def cell_edge_values(self, w):
        """Per-cell, per-local-edge integrals in global edge orientation."""
        wz = np.hstack([np.zeros((len(w), 1)), np.asarray(w, dtype=float)])
        return np.stack([wz[:, j] - wz[:, i] for i, j in self.local_edges], axis=1) * self.cell_edge_sign

    def cochain_to_cell(self, c):
        """Whitney 1-form at each barycenter, chart components (m, d)."""
        d = self.space.dim
        lam = _lambda_grads(d)
        cl = np.asarray(c)[self.cell_edges] * self.cell_edge_sign
        out = np.zeros((self.space.n_cells, d))
        for r_, (i, j) in enumerate(self.local_edges):
            out += cl[:, [r_]] * (lam[j] - lam[i])[None, :]
        return out / (d + 1)

    def cochain_to_vertex(self, c):
        """Mass-averaged Whitney values at the vertices, as tangent ambient vectors (n, D)."""
        sp_ = self.space
        d = sp_.dim
        lam = _lambda_grads(d)
        cl = np.asarray(c)[self.cell_edges] * self.cell_edge_sign
        P = np.einsum("mka,mab->mkb", sp_.edge_matrix, sp_.cell_metric_inv)
        acc = np.zeros((sp_.n_vertices, sp_.ambient_dim))
        w = sp_.cell_measure / (d + 1)
        for p in range(d + 1):
            cov = np.zeros((sp_.n_cells, d))
            for r_, (i, j) in enumerate(self.local_edges):
                if p == i:
                    cov += cl[:, [r_]] * lam[j]
                elif p == j:
                    cov -= cl[:, [r_]] * lam[i]
            np.add.at(acc, sp_.cells[:, p], w[:, None] * np.einsum("mkb,mb->mk", P, cov))
        return project_tangent(sp_, acc / sp_.interior_mass[:, None])

    def face_sign(self):
        """Orientation of each cell relative to its sorted vertex order."""
        C = self.space.cells
        s = np.ones(len(C))
        for i, j in combinations(range(C.shape[1]), 2):
            s *= np.sign(C[:, j] - C[:, i])
        return s


def exterior_calculus(space):
    space = space_of(space)
    return _cached(space, "dec", lambda: ExteriorCalculus(space))


@dataclass
class Cochain:
    """Values on vertices (k=0), edges (k=1) or cells (k=2)."""
    space: object
    degree: int
    values: np.ndarray

    def __add__(self, other):
        return Cochain(self.space, self.degree, self.values + other.values)

    def __sub__(self, other):
        return Cochain(self.space, self.degree, self.values - other.values)

    def __mul__(self, c):
        return Cochain(self.space, self.degree, c * self.values)

    __rmul__ = __mul__


@dataclass
class OperatorHandle:
    """An assembled linear operator with its degree bookkeeping."""
    name: str
    domain_degree: int
    codomain_degree: int
    matrix: object = field(repr=False)

    def __call__(self, c):
        return Cochain(c.space, self.codomain_degree, self.matrix @ c.values)


def operator(space, name):
    """Assembled d_k, delta_k or hodge_0 as an OperatorHandle."""
    ec = exterior_calculus(space)
    if name == "d_0":
        return OperatorHandle(name, 0, 1, ec.d0)
    if name == "d_1" and ec.d1 is not None:
        return OperatorHandle(name, 1, 2, ec.d1)
    if name == "delta_1":
        return OperatorHandle(name, 1, 0, sp.diags(1.0 / ec.M0) @ ec.d0.T @ ec.M1)
    if name == "hodge_0":
        return OperatorHandle(name, 0, 0, sp.diags(1.0 / ec.M0) @ assemble(ec.space).stiffness)
    raise ValueError(f"unknown operator {name!r}")


def to_cochain(x):
    """KForm/OneForm/vertex field -> Cochain."""
    if isinstance(x, Cochain):
        return x
    sp_ = x.space
    ec = exterior_calculus(sp_)
    if isinstance(x, OneForm):
        return Cochain(sp_, 1, ec.cell_to_cochain(x.values))
    if isinstance(x, KForm):
        if x.degree == 0:
            return Cochain(sp_, 0, cell_to_vertex(sp_, x.values))
        if x.degree == 1:
            return Cochain(sp_, 1, ec.cell_to_cochain(x.values))
        if x.degree == 2:
            return Cochain(sp_, 2, 0.5 * x.values)
    raise TypeError("cannot convert to a cochain")


def to_kform(c):
    ec = exterior_calculus(c.space)
    if c.degree == 0:
        return KForm(c.space, 0, vertex_to_cell(c.space, c.values))
    if c.degree == 1:
        return KForm(c.space, 1, ec.cochain_to_cell(c.values))
    return KForm(c.space, 2, 2.0 * c.values)


def cochain_oneform(c):
    """A 1-cochain as a OneForm with its Whitney vertex representative."""
    ec = exterior_calculus(c.space)
    return OneForm(c.space, ec.cochain_to_cell(c.values), ec.cochain_to_vertex(c.values))


def vertex_cochain(space, f):
    return Cochain(space_of(space), 0, field_values(f, space_of(space)))


def _wrap(result, like):
    return to_kform(result) if isinstance(like, KForm) else result


def exterior_derivative(x):
    c = to_cochain(x)
    ec = exterior_calculus(c.space)
    if c.degree >= c.space.dim:
        raise ValueError("exterior derivative degree overflow")
    mat = ec.d0 if c.degree == 0 else ec.d1
    return _wrap(Cochain(c.space, c.degree + 1, mat @ c.values), x)


def codifferential(x):
    """Mass adjoint of d: delta_1 = M0^{-1} d0^T M1, delta_2 = M1^{-1} d1^T M2."""
    c = to_cochain(x)
    ec = exterior_calculus(c.space)
    if c.degree == 0:
        raise ValueError("codifferential needs degree >= 1")
    if c.degree == 1:
        out = Cochain(c.space, 0, (ec.d0.T @ (ec.M1 @ c.values)) / ec.M0)
    else:
        out = Cochain(c.space, 1, ec.m1_solve(ec.d1.T @ (ec.M2 * c.values)))
    return _wrap(out, x)


def hodge_laplacian(x):
    """Box_k = d delta + delta d (absolute boundary conditions)."""
    c = to_cochain(x)
    d = c.space.dim
    out = None
    if c.degree < d:
        out = codifferential(exterior_derivative(c))
    if c.degree > 0:
        t = exterior_derivative(codifferential(c))
        out = t if out is None else out + t
    return _wrap(out, x)


def inner_cochain(a, b):
    """L2 product of two cochains of equal degree."""
    ec = exterior_calculus(a.space)
    if a.degree == 0:
        return float(np.sum(ec.M0 * a.values * b.values))
    if a.degree == 1:
        return float(a.values @ (ec.M1 @ b.values))
    return float(np.sum(ec.M2 * a.values * b.values))


def cup(a, b):
    """Cup product of cochains (ordered simplices), graded Leibniz for d holds exactly."""
    sp_ = a.space
    ec = exterior_calculus(sp_)
    k, l = a.degree, b.degree
    if k + l > sp_.dim:
        return Cochain(sp_, k + l, np.zeros(0))
    if k == 0 and l == 0:
        return Cochain(sp_, 0, a.values * b.values)
    if k == 0 and l == 1:
        return Cochain(sp_, 1, a.values[ec.edges[:, 0]] * b.values)
    if k == 1 and l == 0:
        return Cochain(sp_, 1, a.values * b.values[ec.edges[:, 1]])
    S = np.sort(sp_.cells, axis=1)
    sign = ec.face_sign()
    if k == 0:
        return Cochain(sp_, 2, a.values[S[:, 0]] * b.values)
    if l == 0:
        return Cochain(sp_, 2, a.values * b.values[S[:, 2]])
    n = sp_.n_vertices
    lookup = {int(e0) * n + int(e1): i for i, (e0, e1) in enumerate(ec.edges)}
    e01 = np.array([lookup[int(u) * n + int(v)] for u, v in S[:, :2]])
    e12 = np.array([lookup[int(u) * n + int(v)] for u, v in S[:, 1:]])
    return Cochain(sp_, 2, sign * a.values[e01] * b.values[e12])


def heat_flow_form(omega, t):
    """H_t omega = exp(-t Box_1) omega on 1-cochains; returns a OneForm."""
    if t < 0:
        raise ValueError("heat_flow_form needs t >= 0")
    c = to_cochain(omega)
    if c.degree != 1:
        raise ValueError("heat_flow_form acts on 1-forms")
    ec = exterior_calculus(c.space)
    return cochain_oneform(Cochain(c.space, 1, ec.pair(1).exp_apply(c.values, t)))


def heat_flow_cochain(c, t):
    ec = exterior_calculus(c.space)
    return Cochain(c.space, 1, ec.pair(1).exp_apply(c.values, t))


@dataclass
class HarmonicResult:
    degree: int
    basis: list
    eigenvalues: np.ndarray
    threshold: float
    inconclusive: bool

    @property
    def dim(self):
        return len(self.basis)


def harmonic_forms(space, k, probe=8, rel_threshold=1e-8):
    """Kernel of Box_k with a threshold relative to the first nonzero eigenvalue."""
    space = space_of(space)
    if k > space.dim:
        raise ValueError("degree exceeds dimension")
    pair_ = exterior_calculus(space).pair(k)
    while True:
        count = min(probe, pair_.size)
        vals, vecs = pair_.lowest(count)
        scale = np.max(np.abs(vals))
        nonzero = vals[vals > 1e-6 * scale] if scale > 0 else vals[:0]
        if len(nonzero) or count == pair_.size:
            break
        probe *= 2
    first = nonzero[0] if len(nonzero) else 1.0
    tau = rel_threshold * first
    keep = vals <= tau
    inconclusive = bool(np.any((np.abs(vals) > tau / 10) & (np.abs(vals) < 10 * tau)))
    basis = [Cochain(space, k, vecs[:, i]) for i in np.flatnonzero(keep)]
    return HarmonicResult(k, basis, vals, float(tau), inconclusive)


def de_rham_dim(space, k):
    res = harmonic_forms(space, k)
    if res.inconclusive:
        raise ArithmeticError(f"kernel of the degree-{k} Hodge Laplacian is inconclusive")
    return res.dim


def hodge_spectrum(space, k, count):
    return exterior_calculus(space).pair(k).lowest(count)


# -- Hessian duality -------------------------------------------------------------

def hessian_duality_bound(space, f, g_list, gp_list, h_list, hp_list):
    """Supremum of the Hessian duality functional over the span of the test tensors.

    Each tuple contributes A_l = h h' grad g (x) grad g'.  The pairing
    2 int Hess f : A_l dm is evaluated through the divergence/carre du champ
    expression (no Hessian is formed); the supremum over the span is the
    least-squares value b^T Gram^+ b.
    """
    from .dirichlet import carre_du_champ
    from .first_order import gradient, l2_divergence
    space = space_of(space)
    form = assemble(space)
    f = field_values(f, space)
    mass = space.interior_mass
    b, tensors = [], []
    for g, gp, h, hp in zip(g_list, gp_list, h_list, hp_list):
        w = field_values(h, space) * field_values(hp, space)
        t1 = -np.sum(mass * carre_du_champ(form, f, g) * l2_divergence(gradient(space, gp).scale(w)))
        t2 = -np.sum(mass * carre_du_champ(form, f, gp) * l2_divergence(gradient(space, g).scale(w)))
        gam = carre_du_champ(form, g, gp)
        t3 = -np.sum(mass * w * carre_du_champ(form, f, gam))
        b.append(t1 + t2 + t3)
        dg = np.einsum("mab,mb->ma", space.cell_metric_inv, cell_differential(space, field_values(g, space)))
        dgp = np.einsum("mab,mb->ma", space.cell_metric_inv, cell_differential(space, field_values(gp, space)))
        wc = vertex_to_cell(space, w)
        tensors.append(wc[:, None, None] * np.einsum("ma,mb->mab", dg, dgp))
    A = np.array(tensors)                                   # contravariant, (L, m, d, d)
    G = space.cell_metric
    lowered = np.einsum("mab,lmbc,mcd->lmad", G, A, G)
    gram = np.einsum("lmad,kmad,m->lk", A, lowered, space.cell_measure)
    lin = 0.5 * np.array(b)                     # int Hess f : A_l dm
    coef = np.linalg.lstsq(gram, lin, rcond=1e-12)[0]
    return float(2 * coef @ lin - coef @ gram @ coef)
