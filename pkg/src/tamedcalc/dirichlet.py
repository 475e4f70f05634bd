"""Dirichlet form, carre du champ, Neumann Laplacian and heat semigroup.

Functions are P1 hat-function interpolants stored at vertices.  The mass is
lumped, so densities with respect to m are plain vertex vectors.
"""
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fieldtypes import field_values, scalar
from .model_space import ModelSpace

EIGEN_MAX_VERTICES = 4000
_DENSE_MAX = [EIGEN_MAX_VERTICES]
_FORMS = weakref.WeakKeyDictionary()


def set_dense_max(n):
    """Vertex count up to which spectra and heat flows use a full eigendecomposition."""
    if int(n) < 1:
        raise ValueError("dense_max must be positive")
    _DENSE_MAX[0] = int(n)


def dense_max():
    return _DENSE_MAX[0]


def cell_differential(space, f):
    """Chart components of df on every cell, shape (m, d) (or (m, d, k))."""
    f = np.asarray(f, dtype=float)
    C = space.cells
    return f[C[:, 1:]] - f[C[:, [0]]]


def cell_gradient(space, f):
    """Chart components of the gradient of the hat interpolant, shape (m, d)."""
    return np.einsum("mab,mb->ma", space.cell_metric_inv, cell_differential(space, f))


def cell_to_vertex(space, c):
    """Mass-weighted average of per-cell values at the vertices.

    Works on trailing dimensions as well, so tensors can be averaged too.
    Integrals are preserved: sum(m_v * R(c)_v) = sum(|T|_m * c_T).
    """
    c = np.asarray(c, dtype=float)
    d = space.dim
    w = space.cell_measure / (d + 1)
    tail = c.shape[1:]
    flat = c.reshape(len(c), -1) * w[:, None]
    out = np.zeros((space.n_vertices, flat.shape[1]))
    for a in range(d + 1):
        np.add.at(out, space.cells[:, a], flat)
    out /= space.interior_mass[:, None]
    return out.reshape((space.n_vertices,) + tail)


def vertex_to_cell(space, f):
    """Cell average of vertex values (module multiplication by functions)."""
    return np.asarray(f, dtype=float)[space.cells].mean(axis=1)


def _stiffness(space):
    d = space.dim
    Dm = np.hstack([-np.ones((d, 1)), np.eye(d)])
    local = np.einsum("ai,mab,bj->mij", Dm, space.cell_metric_inv, Dm) * space.cell_measure[:, None, None]
    C = space.cells
    rows = np.repeat(C, d + 1, axis=1).ravel()
    cols = np.tile(C, (1, d + 1)).ravel()
    n = space.n_vertices
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return 0.5 * (K + K.T)


def start_vector(n):
    """Fixed Lanczos start vector, so eigen solves are reproducible."""
    return np.random.Generator(np.random.PCG64(0)).uniform(0.5, 1.5, size=n)


class SymmetricPair:
    """Generalized symmetric eigenproblem A x = lam M x with cached spectrum.

    ``mass`` is either a 1-d array (diagonal) or a sparse SPD matrix.  The
    semigroup exp(-t M^{-1} A) is applied through the eigendecomposition for
    small problems and through a Krylov matrix exponential otherwise.
    """

    def __init__(self, A, mass, eigen_max=None):
        self.A = sp.csr_matrix(A)
        self.diag = np.ndim(mass) == 1
        self.mass = np.asarray(mass, dtype=float) if self.diag else sp.csr_matrix(mass)
        self.size = self.A.shape[0]
        self.eigen_max = dense_max() if eigen_max is None else int(eigen_max)
        self._eig = None
        self._mlu = None

    def mass_apply(self, x):
        return self.mass[:, None] * x if (self.diag and x.ndim == 2) else (self.mass * x if self.diag else self.mass @ x)

    def mass_solve(self, y):
        if self.diag:
            return y / (self.mass[:, None] if y.ndim == 2 else self.mass)
        if self._mlu is None:
            self._mlu = spla.splu(sp.csc_matrix(self.mass))
        return self._mlu.solve(y)

    @property
    def dense_ok(self):
        return self.size <= self.eigen_max

    def eig(self):
        """Full spectrum (ascending) with M-orthonormal eigenvectors."""
        if self._eig is None:
            A = self.A.toarray()
            if self.diag:
                s = 1.0 / np.sqrt(self.mass)
                vals, vecs = np.linalg.eigh(s[:, None] * A * s[None, :])
                vecs = s[:, None] * vecs
            else:
                vals, vecs = sla.eigh(A, self.mass.toarray())
            self._eig = (vals, vecs)
        return self._eig

    def lowest(self, count):
        count = min(count, self.size)
        if self.dense_ok or count >= self.size - 1:
            vals, vecs = self.eig()
            return vals[:count], vecs[:, :count]
        M = sp.diags(self.mass) if self.diag else self.mass
        scale = abs(self.A.diagonal()).max() / max(abs(M.diagonal()).max(), 1e-300)
        sigma = -1e-3 * scale
        vals, vecs = spla.eigsh(self.A, k=count, M=M, sigma=sigma, which="LM", tol=1e-12,
                                 v0=start_vector(self.size))
        order = np.argsort(vals)
        return vals[order], vecs[:, order]

    def highest(self):
        if self.dense_ok:
            vals, vecs = self.eig()
            return vals[-1], vecs[:, -1]
        M = sp.diags(self.mass) if self.diag else self.mass
        vals, vecs = spla.eigsh(self.A, k=1, M=M, which="LA", tol=1e-12, v0=start_vector(self.size))
        return vals[0], vecs[:, 0]

    def exp_apply(self, x, t):
        """exp(-t M^{-1} A) x."""
        x = np.asarray(x, dtype=float)
        if t == 0:
            return x.copy()
        if self.dense_ok:
            vals, vecs = self.eig()
            coef = vecs.T @ self.mass_apply(x)
            decay = np.exp(-t * vals)
            return vecs @ (decay[:, None] * coef if coef.ndim == 2 else decay * coef)
        if self.diag:
            s = np.sqrt(self.mass)
            S = sp.diags(1 / s) @ self.A @ sp.diags(1 / s)
            y = spla.expm_multiply(-t * S, (s[:, None] * x) if x.ndim == 2 else s * x)
            return y / (s[:, None] if y.ndim == 2 else s)
        op = spla.LinearOperator(self.A.shape, matvec=lambda v: -t * self.mass_solve(self.A @ v),
                                 rmatvec=lambda v: -t * (self.A @ self.mass_solve(v)), dtype=float)
        if x.ndim == 1:
            trace = -t * float(np.sum(self.A.diagonal() / self.mass.diagonal()))
            return spla.expm_multiply(op, x, traceA=trace)
        return np.column_stack([self.exp_apply(x[:, j], t) for j in range(x.shape[1])])


@dataclass(eq=False)
class DirichletForm:
    """Assembled energy form on a model space.

    ``stiffness`` is K with E(f, g) = f^T K g, ``mass`` the lumped diagonal of
    m, ``boundary_mass`` the lumped s as a full-length vertex vector.
    """
    space: ModelSpace
    stiffness: sp.csr_matrix
    mass: np.ndarray
    boundary_mass: np.ndarray
    eigen_max: int = EIGEN_MAX_VERTICES
    _pair: SymmetricPair = field(default=None, repr=False)

    @property
    def pair(self):
        if self._pair is None:
            self._pair = SymmetricPair(self.stiffness, self.mass, self.eigen_max)
        return self._pair

    @property
    def spectral_cache(self):
        return self.pair._eig

    def values(self, f, name="field"):
        return field_values(f, self.space, name)


def assemble(space, eigen_max=None):
    """Assemble stiffness, lumped mass and boundary mass (cached per space)."""
    eigen_max = dense_max() if eigen_max is None else int(eigen_max)
    cache = _FORMS.setdefault(space, {})
    if eigen_max not in cache:
        K = _stiffness(space)
        sfull = np.zeros(space.n_vertices)
        sfull[space.boundary_vertices] = space.boundary_mass
        cache[eigen_max] = DirichletForm(space=space, stiffness=K, mass=space.interior_mass.copy(),
                                         boundary_mass=sfull, eigen_max=eigen_max)
    return cache[eigen_max]


def energy(form, f, g=None):
    f = form.values(f)
    g = f if g is None else form.values(g)
    return float(f @ (form.stiffness @ g))


def integrate(form, f):
    """Integral of a vertex field against m (lumped quadrature)."""
    return float(form.mass @ form.values(f))


def l2_inner(form, f, g):
    return float(np.sum(form.mass * form.values(f) * form.values(g)))


def carre_du_champ(form, f, g=None):
    """Gamma(f, g): cellwise <grad f, grad g>, mass-averaged to vertices."""
    sp_ = form.space
    f = form.values(f, "f")
    g = f if g is None else form.values(g, "g")
    df, dg = cell_differential(sp_, f), cell_differential(sp_, g)
    cell = np.einsum("ma,mab,mb->m", df, sp_.cell_metric_inv, dg)
    return scalar(sp_, cell_to_vertex(sp_, cell))


def laplacian(form, f):
    """Neumann Laplacian  -M^{-1} K f."""
    return scalar(form.space, -(form.stiffness @ form.values(f)) / form.mass)


def heat_flow(form, f, t):
    """P_t f = exp(t Delta) f."""
    if t < 0:
        raise ValueError("heat_flow needs t >= 0")
    return scalar(form.space, form.pair.exp_apply(form.values(f), t))


def spectrum(form, count):
    """Lowest ``count`` eigenvalues of -Delta with M-orthonormal eigenfields."""
    if count > form.space.n_vertices:
        raise ValueError("count exceeds the number of vertices")
    vals, vecs = form.pair.lowest(count)
    vals = np.where(np.abs(vals) < 1e-12 * max(1.0, abs(vals).max()), 0.0, vals)
    return vals, vecs
