"""Differential, gradient, divergence and measure-valued divergence.

Measures are stored through their vertex numerators N_v = mu(phi_v).  The
discrete Lebesgue decomposition is by vertex location: numerators at
interior vertices are densities against m, numerators at boundary vertices
are densities against s.
"""
import json
import weakref

import numpy as np
import scipy.sparse as sp

from .dirichlet import cell_differential, cell_gradient
from .fields import OneForm, VectorField
from .fieldtypes import field_values, scalar


def space_of(obj):
    return getattr(obj, "space", obj)


class MeasureField:
    """Signed measure split into an m-density and an s-density."""

    def __init__(self, space, interior, boundary):
        self.space = space
        self.interior = np.asarray(interior, dtype=float)
        self.boundary = np.asarray(boundary, dtype=float)
        if self.interior.shape != (space.n_vertices,):
            raise ValueError("interior density must be per vertex")
        if self.boundary.shape != (len(space.boundary_vertices),):
            raise ValueError("boundary density must be per boundary vertex")

    @classmethod
    def from_numerator(cls, space, N):
        N = np.asarray(N, dtype=float)
        bv = space.boundary_vertices
        interior = N / space.interior_mass
        interior[bv] = 0.0
        return cls(space, interior, N[bv] / space.boundary_mass)

    @classmethod
    def from_density(cls, space, rho):
        """The measure rho * m (its boundary-vertex mass moves to the s-part)."""
        return cls.from_numerator(space, space.interior_mass * field_values(rho, space))

    @classmethod
    def zero(cls, space):
        return cls(space, np.zeros(space.n_vertices), np.zeros(len(space.boundary_vertices)))

    def numerator(self):
        N = self.space.interior_mass * self.interior
        bv = self.space.boundary_vertices
        N[bv] = self.space.boundary_mass * self.boundary
        return N

    def pair(self, h):
        """Integral of the hat interpolant of h against the measure."""
        return float(self.numerator() @ field_values(h, self.space))

    def total(self):
        return float(np.sum(self.numerator()))

    def tv(self):
        return float(np.sum(self.space.interior_mass * np.abs(self.interior))
                     + np.sum(self.space.boundary_mass * np.abs(self.boundary)))

    def negative_tv(self):
        """Total variation of the negative part."""
        return float(np.sum(self.space.interior_mass * np.maximum(-self.interior, 0.0))
                     + np.sum(self.space.boundary_mass * np.maximum(-self.boundary, 0.0)))

    def interior_values(self):
        """Densities at interior vertices only."""
        return self.interior[self.space.interior_vertices()]

    def __add__(self, other):
        return MeasureField(self.space, self.interior + other.interior, self.boundary + other.boundary)

    def __sub__(self, other):
        return MeasureField(self.space, self.interior - other.interior, self.boundary - other.boundary)

    def __mul__(self, c):
        return MeasureField(self.space, c * self.interior, c * self.boundary)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def scale(self, g):
        """Multiply the measure by a function."""
        g = field_values(g, self.space)
        return MeasureField(self.space, g * self.interior, g[self.space.boundary_vertices] * self.boundary)

    def to_dict(self):
        return {"interior": self.interior.tolist(), "boundary": self.boundary.tolist(), "tv": self.tv()}

    def to_json(self):
        return json.dumps(self.to_dict())


# -- nodal gradient recovery ------------------------------------------------------

_RECOVERY = weakref.WeakKeyDictionary()


def _vertex_adjacency(space):
    C = space.cells
    k = C.shape[1]
    rows = np.repeat(C, k, axis=1).ravel()
    cols = np.tile(C, (1, k)).ravel()
    n = space.n_vertices
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def recovery_operator(space):
    """Sparse map f -> vertex gradients (n*D rows) by local quadratic fits.

    At each vertex the values over the two-ring are fitted by a quadratic in
    tangent-plane coordinates, pinned at the vertex value; the linear part is
    the recovered gradient.  This is second-order accurate up to the boundary.
    """
    op = _RECOVERY.get(space)
    if op is not None:
        return op
    d, D, n = space.dim, space.ambient_dim, space.n_vertices
    A1 = _vertex_adjacency(space)
    A2 = (A1 @ A1).tocsr()
    A3 = None
    nquad = d * (d + 1) // 2
    need = d + nquad + 1
    B = space.tangent_frames
    iu = np.triu_indices(d)
    rows, cols, vals = [], [], []
    for v in range(n):
        nb = A2.indices[A2.indptr[v]:A2.indptr[v + 1]]
        nb = nb[nb != v]
        if len(nb) < need:
            if A3 is None:
                A3 = (A2 @ A1).tocsr()
            nb = A3.indices[A3.indptr[v]:A3.indptr[v + 1]]
            nb = nb[nb != v]
        y = space.displacement(np.full(len(nb), v), nb) @ B[v]
        scale = np.max(np.abs(y))
        y = y / scale
        quad = 0.5 * (y[:, :, None] * y[:, None, :])[:, iu[0], iu[1]]
        design = np.hstack([y, quad])
        coef = np.linalg.pinv(design)[:d] / scale
        amb = B[v] @ coef
        for k in range(D):
            rows.append(np.full(len(nb) + 1, v * D + k))
            cols.append(np.concatenate([nb, [v]]))
            vals.append(np.concatenate([amb[k], [-amb[k].sum()]]))
    op = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n * D, n))
    _RECOVERY[space] = op
    return op


def recovered_gradient(space, f):
    """Ambient vertex gradients of f, shape (n, D)."""
    space = space_of(space)
    f = field_values(f, space)
    return (recovery_operator(space) @ f).reshape(space.n_vertices, space.ambient_dim)


# -- first-order operators --------------------------------------------------------

def differential(space, f):
    """df: cellwise exact differential of the hat interpolant."""
    space = space_of(space)
    f = field_values(f, space)
    return OneForm(space, cell_differential(space, f), recovered_gradient(space, f))


def gradient(space, f):
    space = space_of(space)
    f = field_values(f, space)
    return VectorField(space, cell_gradient(space, f), recovered_gradient(space, f))


def divergence_numerator(X):
    """N_v = -int d(phi_v)(X) dm for every vertex hat function."""
    space = X.space
    c = space.cell_measure[:, None] * X.values
    out = np.zeros(space.n_vertices)
    np.add.at(out, space.cells[:, 0], c.sum(axis=1))
    for a in range(1, space.dim + 1):
        np.add.at(out, space.cells[:, a], -c[:, a - 1])
    return out


def l2_divergence(X):
    """div X = -M^{-1} B X; div grad f equals the Neumann Laplacian exactly."""
    return scalar(X.space, divergence_numerator(X) / X.space.interior_mass)


def measure_divergence(X):
    """DIV X as a measure: h -> -int dh(X) dm, split by vertex location."""
    return MeasureField.from_numerator(X.space, divergence_numerator(X))


def normal_component(X):
    """n X: minus the boundary part of DIV X (a boundary-only measure)."""
    div = measure_divergence(X)
    return MeasureField(X.space, np.zeros(X.space.n_vertices), -div.boundary)


def measure_laplacian(form, f):
    """Delta f as a measure, the same as DIV grad f."""
    return MeasureField.from_numerator(form.space, -(form.stiffness @ form.values(f)))


def gauss_green_residual(X, h):
    """int dh(X) dm + int h div X dm - int h nX ds (zero up to rounding)."""
    space = X.space
    h = field_values(h, space)
    lhs = float(np.sum(space.cell_measure * np.sum(cell_differential(space, h) * X.values, axis=1)))
    div = measure_divergence(X)
    nx = normal_component(X)
    bulk = float(np.sum(space.interior_mass * h * div.interior))
    bnd = float(np.sum(space.boundary_mass * h[space.boundary_vertices] * nx.boundary))
    return lhs + bulk - bnd
