"""Finite-dimensional module layer: vector fields, 1-forms, tensors, k-forms.

Fibers are per cell, expressed in the chart frame of the cell (the edge
vectors p_a - p_0).  Vector fields and 1-forms may additionally carry a
vertex representative in ambient coordinates; second-order operators
differentiate that representative.
"""
import warnings

import numpy as np

from .dirichlet import cell_differential, cell_to_vertex, vertex_to_cell
from .fieldtypes import SpaceMismatchError, field_values, scalar


def _check_same(a, b):
    if a.space is not b.space and a.space.tag != b.space.tag:
        raise SpaceMismatchError("fields live on different spaces")


def project_tangent(space, vecs):
    """Project ambient vertex vectors onto the vertex tangent planes."""
    B = space.tangent_frames
    return np.einsum("nka,na->nk", B, np.einsum("nka,nk->na", B, vecs))


class _CellField:
    """Shared arithmetic of per-cell fields with an optional vertex representative."""

    def __init__(self, space, values, nodal=None):
        self.space = space
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (space.n_cells, space.dim):
            raise ValueError(f"expected cell values of shape {(space.n_cells, space.dim)}")
        self._nodal = None if nodal is None else np.asarray(nodal, dtype=float)

    @property
    def space_tag(self):
        return self.space.tag

    def _new(self, values, nodal):
        return type(self)(self.space, values, nodal)

    def __add__(self, other):
        _check_same(self, other)
        nod = None
        if self._nodal is not None and other._nodal is not None:
            nod = self._nodal + other._nodal
        return self._new(self.values + other.values, nod)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, c):
        if np.ndim(c) != 0:
            return NotImplemented
        return self._new(c * self.values, None if self._nodal is None else c * self._nodal)

    __rmul__ = __mul__

    def scale(self, f):
        """Module multiplication by a vertex function (cell-averaged on fibers)."""
        f = field_values(f, self.space)
        nod = None if self._nodal is None else f[:, None] * self._nodal
        return self._new(vertex_to_cell(self.space, f)[:, None] * self.values, nod)

    def restrict(self, cell_mask):
        """Zero the field outside ``cell_mask`` (drops the vertex representative)."""
        return self._new(self.values * np.asarray(cell_mask, dtype=float)[:, None], None)

    def ambient(self):
        """Per-cell ambient vectors J X (for 1-forms: of the metric dual)."""
        return np.einsum("mka,ma->mk", self.space.edge_matrix, self._vector_values())

    def nodal(self):
        """Vertex representative as tangent ambient vectors, shape (n, D)."""
        if self._nodal is None:
            self._nodal = project_tangent(self.space, cell_to_vertex(self.space, self.ambient()))
        return self._nodal

    def has_nodal(self):
        return self._nodal is not None


class VectorField(_CellField):
    """Per-cell tangent vectors in chart components."""

    def _vector_values(self):
        return self.values

    @classmethod
    def from_ambient(cls, space, vecs):
        """Field from ambient vertex vectors (projected to the tangent planes)."""
        nod = project_tangent(space, np.asarray(vecs, dtype=float).reshape(space.n_vertices, -1))
        return cls(space, cell_from_nodal(space, nod), nod)

    @classmethod
    def from_function(cls, space, func):
        return cls.from_ambient(space, func(space.vertices))


class OneForm(_CellField):
    """Per-cell covectors in chart components."""

    def _vector_values(self):
        return np.einsum("mab,mb->ma", self.space.cell_metric_inv, self.values)


def cell_from_nodal(space, nodal):
    """Chart components of the tangential part of the cell-averaged ambient vector."""
    mean = np.asarray(nodal)[space.cells].mean(axis=1)
    J = space.edge_matrix
    return np.einsum("mab,mkb,mk->ma", space.cell_metric_inv, J, mean)


def flat(X):
    return OneForm(X.space, np.einsum("mab,mb->ma", X.space.cell_metric, X.values), X._nodal)


def sharp(w):
    return VectorField(w.space, np.einsum("mab,mb->ma", w.space.cell_metric_inv, w.values), w._nodal)


def musical(x):
    """Index lowering for vector fields, raising for 1-forms."""
    if isinstance(x, VectorField):
        return flat(x)
    if isinstance(x, OneForm):
        return sharp(x)
    raise TypeError("musical expects a VectorField or OneForm")


def inner_cell(x, y):
    """Pointwise (per-cell) scalar product of two vector fields or two 1-forms."""
    _check_same(x, y)
    if type(x) is not type(y):
        raise TypeError("inner product needs two fields of the same kind")
    G = x.space.cell_metric if isinstance(x, VectorField) else x.space.cell_metric_inv
    return np.einsum("ma,mab,mb->m", x.values, G, y.values)


def norm_cell(x):
    return np.sqrt(np.maximum(inner_cell(x, x), 0.0))


def inner_vertex(x, y):
    """Pointwise scalar product as a vertex function (mass-averaged cell values)."""
    return scalar(x.space, cell_to_vertex(x.space, inner_cell(x, y)))


def nodal_inner(x, y):
    """Scalar product of the vertex representatives."""
    _check_same(x, y)
    return scalar(x.space, np.sum(x.nodal() * y.nodal(), axis=1))


def nodal_norm(x):
    return scalar(x.space, np.linalg.norm(x.nodal(), axis=1))


def apply_form(w, X):
    """w(X) per cell."""
    _check_same(w, X)
    return np.sum(w.values * X.values, axis=1)


# -- rank-2 tensors ---------------------------------------------------------------

class TensorField2:
    """Per-cell d x d component matrices with a variance tag.

    ``covariant`` components act on pairs of vectors: A(u, v) = u^T A v.
    ``contravariant`` components are those of sums of X (x) Y.
    """

    def __init__(self, space, values, variance="covariant"):
        if variance not in ("covariant", "contravariant"):
            raise ValueError("variance must be 'covariant' or 'contravariant'")
        self.space = space
        self.values = np.asarray(values, dtype=float)
        self.variance = variance
        d = space.dim
        if self.values.shape != (space.n_cells, d, d):
            raise ValueError(f"expected tensor values of shape {(space.n_cells, d, d)}")

    def _metric(self):
        return self.space.cell_metric_inv if self.variance == "covariant" else self.space.cell_metric

    def __add__(self, other):
        _check_variance(self, other)
        return TensorField2(self.space, self.values + other.values, self.variance)

    def __sub__(self, other):
        _check_variance(self, other)
        return TensorField2(self.space, self.values - other.values, self.variance)

    def __mul__(self, c):
        if np.ndim(c) != 0:
            return NotImplemented
        return TensorField2(self.space, c * self.values, self.variance)

    __rmul__ = __mul__

    def scale(self, f):
        f = vertex_to_cell(self.space, field_values(f, self.space))
        return TensorField2(self.space, f[:, None, None] * self.values, self.variance)

    def transpose(self):
        return TensorField2(self.space, np.swapaxes(self.values, 1, 2), self.variance)

    def sym(self):
        return TensorField2(self.space, 0.5 * (self.values + np.swapaxes(self.values, 1, 2)), self.variance)

    def asym(self):
        return TensorField2(self.space, 0.5 * (self.values - np.swapaxes(self.values, 1, 2)), self.variance)

    def trace(self):
        return np.einsum("mab,mba->m", self._metric(), self.values)

    def hs_inner(self, other):
        _check_variance(self, other)
        g = self._metric()
        return np.einsum("mab,mbc,mcd,mad->m", g, self.values, g, other.values)

    def hs_norm(self):
        return np.sqrt(np.maximum(self.hs_inner(self), 0.0))

    def lower(self):
        if self.variance == "covariant":
            return self
        G = self.space.cell_metric
        return TensorField2(self.space, G @ self.values @ G, "covariant")

    def raise_(self):
        if self.variance == "contravariant":
            return self
        Gi = self.space.cell_metric_inv
        return TensorField2(self.space, Gi @ self.values @ Gi, "contravariant")

    def contract(self, X, Y):
        """A(X, Y) per cell for vector fields X, Y."""
        A = self.lower().values
        return np.einsum("ma,mab,mb->m", X.values, A, Y.values)

    def ambient(self):
        """Ambient (D x D) matrices representing the covariant tensor."""
        J = self.space.edge_matrix
        Gi = self.space.cell_metric_inv
        A = self.lower().values
        P = np.einsum("mka,mab->mkb", J, Gi)
        return np.einsum("mka,mab,mlb->mkl", P, A, P)


def _check_variance(a, b):
    _check_same(a, b)
    if a.variance != b.variance:
        raise ValueError("variance mismatch")


def tensor_product(x, y):
    """x (x) y for two vector fields (contravariant) or two 1-forms (covariant)."""
    _check_same(x, y)
    if type(x) is not type(y):
        raise TypeError("tensor product needs two fields of the same kind")
    variance = "contravariant" if isinstance(x, VectorField) else "covariant"
    return TensorField2(x.space, np.einsum("ma,mb->mab", x.values, y.values), variance)


def identity_tensor(space):
    return TensorField2(space, space.cell_metric.copy(), "covariant")


def tensor_ops(a, b):
    """Pointwise algebra of two rank-2 tensors."""
    _check_variance(a, b)
    return {
        "hs_inner": a.hs_inner(b),
        "sym": a.sym(),
        "asym": a.asym(),
        "transpose": a.transpose(),
        "trace": a.trace(),
    }


# -- k-forms --------------------------------------------------------------------

class KForm:
    """Per-cell k-form components (k = 0, 1, 2).

    Degree 0: one scalar per cell.  Degree 1: chart covector.  Degree 2 on a
    surface: the coefficient of e^1 ^ e^2.  Degrees above the dimension form
    the zero module.
    """

    def __init__(self, space, degree, values=None):
        self.space = space
        self.degree = int(degree)
        m, d = space.n_cells, space.dim
        if self.degree > d:
            self.values = np.zeros((m, 0))
            return
        shape = {0: (m,), 1: (m, d), 2: (m,)}[self.degree]
        self.values = np.zeros(shape) if values is None else np.asarray(values, dtype=float).reshape(shape)

    @property
    def is_zero_module(self):
        return self.degree > self.space.dim

    @classmethod
    def from_oneform(cls, w):
        return cls(w.space, 1, w.values)

    def to_oneform(self):
        return OneForm(self.space, self.values)

    def __add__(self, other):
        _check_same(self, other)
        if other.degree != self.degree:
            raise ValueError("degree mismatch")
        return KForm(self.space, self.degree, self.values + other.values)

    def __mul__(self, c):
        return KForm(self.space, self.degree, c * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def inner(self, other):
        """Pointwise scalar product per cell."""
        _check_same(self, other)
        Gi = self.space.cell_metric_inv
        if self.is_zero_module:
            return np.zeros(self.space.n_cells)
        if self.degree == 0:
            return self.values * other.values
        if self.degree == 1:
            return np.einsum("ma,mab,mb->m", self.values, Gi, other.values)
        return self.values * other.values * np.linalg.det(Gi)


def wedge(omega, eta):
    """Exterior product; degree overflow yields the zero form with a warning."""
    _check_same(omega, eta)
    k, l = omega.degree, eta.degree
    sp = omega.space
    if k + l > sp.dim:
        warnings.warn("wedge degree exceeds dimension; returning the zero form", stacklevel=2)
        return KForm(sp, k + l)
    if k == 0:
        v = omega.values if l != 1 else omega.values[:, None]
        return KForm(sp, l, v * eta.values)
    if l == 0:
        v = eta.values if k != 1 else eta.values[:, None]
        return KForm(sp, k, omega.values * v)
    a, b = omega.values, eta.values
    return KForm(sp, 2, a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def differential_kform(f, space):
    """The exact 1-form df of a vertex function as a KForm."""
    return KForm(space, 1, cell_differential(space, field_values(f, space)))


def coordinate_form(space, i):
    """d(x_i) for the i-th ambient coordinate, as a KForm."""
    return KForm(space, 1, space.edge_matrix[:, i, :])


# -- pointwise index ---------------------------------------------------------------

def hino_index(space, fields, rtol=1e-10):
    """Per-cell rank of the Gram matrix [Gamma(f_i, f_j)] of a function family."""
    if len(fields) == 0:
        raise ValueError("hino_index needs at least one field")
    dfs = np.stack([cell_differential(space, field_values(f, space)) for f in fields], axis=1)
    gram = np.einsum("mia,mab,mjb->mij", dfs, space.cell_metric_inv, dfs)
    sv = np.linalg.svd(gram, compute_uv=False)
    top = sv[:, :1]
    return np.sum((sv > rtol * top) & (top > 0), axis=1)
