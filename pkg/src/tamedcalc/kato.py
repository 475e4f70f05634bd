"""Taming measures, Schrodinger operators and Kato-type constants."""
import hashlib
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dirichlet import SymmetricPair, start_vector
from .fieldtypes import SpaceMismatchError, field_values, scalar

QUADRATURE_STEPS = 256


class KatoMeasure:
    """kappa = k m + l s with vertex densities k and boundary densities l."""

    def __init__(self, space, k=None, l=None):
        self.space = space
        n, nb = space.n_vertices, len(space.boundary_vertices)
        self.k = np.zeros(n) if k is None else np.broadcast_to(np.asarray(k, dtype=float), (n,)).copy()
        self.l = np.zeros(nb) if l is None else np.broadcast_to(np.asarray(l, dtype=float), (nb,)).copy()
        if not (np.all(np.isfinite(self.k)) and np.all(np.isfinite(self.l))):
            raise ValueError("taming densities must be finite")
        self.k.setflags(write=False)
        self.l.setflags(write=False)

    @classmethod
    def from_descriptors(cls, space, interior=None, boundary=None):
        k = space.evaluate(interior) if interior is not None else None
        l = None
        if boundary is not None:
            bpts = space.vertices[space.boundary_vertices]
            from .model_space import evaluate_descriptor
            l = evaluate_descriptor(boundary, bpts)
        return cls(space, k, l)

    @property
    def key(self):
        h = hashlib.sha1(self.k.tobytes())
        h.update(self.l.tobytes())
        return h.hexdigest()

    def lumped(self):
        """Vertex numerators of kappa against hat functions: m k + s l."""
        out = self.space.interior_mass * self.k
        out[self.space.boundary_vertices] += self.space.boundary_mass * self.l
        return out

    def density(self):
        """Lumped density of kappa with respect to m."""
        return self.lumped() / self.space.interior_mass

    def abs(self):
        return KatoMeasure(self.space, np.abs(self.k), np.abs(self.l))

    def positive_part(self):
        return KatoMeasure(self.space, np.maximum(self.k, 0), np.maximum(self.l, 0))

    def negative_part(self):
        return KatoMeasure(self.space, np.maximum(-self.k, 0), np.maximum(-self.l, 0))

    def __mul__(self, c):
        return KatoMeasure(self.space, c * self.k, c * self.l)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def tv(self):
        return float(np.sum(self.space.interior_mass * np.abs(self.k))
                     + np.sum(self.space.boundary_mass * np.abs(self.l)))

    def is_zero(self):
        return not (np.any(self.k) or np.any(self.l))


@dataclass(frozen=True)
class FormBound:
    rho_prime: float
    alpha_prime: float


def taming_measure(space):
    """Lower bounds for Ric (interior) and II (boundary) of the named model shapes."""
    if np.any(space.weight_w != 0):
        raise ValueError("no default taming measure for weighted spaces; give kappa explicitly")
    shape, p = space.shape, space.size_params
    if shape in ("interval", "rectangle", "torus"):
        return KatoMeasure(space)
    if shape == "disk":
        return KatoMeasure(space, 0.0, 1.0 / p[0])
    if shape == "sphere":
        return KatoMeasure(space, 1.0 / p[0] ** 2)
    if shape == "hemisphere":
        return KatoMeasure(space, 1.0 / p[0] ** 2, 0.0)
    if shape == "annulus":
        r = np.linalg.norm(space.vertices[space.boundary_vertices], axis=1)
        r_in, r_out = p
        l = np.where(r > 0.5 * (r_in + r_out), 1.0 / r_out, -1.0 / r_in)
        return KatoMeasure(space, 0.0, l)
    raise ValueError(f"no default taming measure for shape {shape!r}")


def _check(form, kappa):
    if kappa.space.tag != form.space.tag:
        raise SpaceMismatchError("kappa and form live on different spaces")


def _check_q(q):
    if not 1.0 <= q <= 2.0:
        raise ValueError("q must lie in [1, 2]")


def pair(kappa, f):
    """<kappa | f> = int f k dm + int f l ds (lumped)."""
    return float(kappa.lumped() @ field_values(f, kappa.space))


class SchrodingerOperator:
    """Delta^{q kappa} = Delta - q M^{-1} V with V the lumped kappa."""

    def __init__(self, form, kappa, q):
        _check(form, kappa)
        _check_q(q)
        self.form, self.kappa, self.q = form, kappa, float(q)
        self.potential = self.q * kappa.lumped()
        self.matrix = (form.stiffness + sp.diags(self.potential)).tocsr()
        self.pair = SymmetricPair(self.matrix, form.mass, form.eigen_max)

    def apply(self, f):
        f = self.form.values(f)
        return scalar(self.form.space, -(self.matrix @ f) / self.form.mass)

    __call__ = apply

    def energy(self, f, g=None):
        f = self.form.values(f)
        g = f if g is None else self.form.values(g)
        return float(f @ (self.matrix @ g))

    def spectrum(self, count):
        return self.pair.lowest(count)

    def semigroup(self, f, t):
        if t < 0:
            raise ValueError("semigroup needs t >= 0")
        return scalar(self.form.space, self.pair.exp_apply(self.form.values(f), t))


_OPERATORS = weakref.WeakKeyDictionary()


def schrodinger_operator(form, kappa, q=1.0):
    cache = _OPERATORS.setdefault(form, {})
    key = (kappa.key, float(q))
    if key not in cache:
        cache[key] = SchrodingerOperator(form, kappa, q)
    return cache[key]


def schrodinger_semigroup(form, kappa, q, f, t):
    """P_t^{q kappa} f = exp(t Delta^{q kappa}) f."""
    if t < 0:
        raise ValueError("schrodinger_semigroup needs t >= 0")
    return schrodinger_operator(form, kappa, q).semigroup(f, t)


def kato_constant(form, kappa, t_grid, steps=QUADRATURE_STEPS):
    """Profile K(t) = max_x E^x[a_t^{2|kappa|}] on the process clock.

    The process runs at twice the semigroup speed, so
    E^x[a_t^{2|kappa|}] = int_0^{2t} P_{s/2} rho ds = 2 int_0^t P_u rho du,
    with rho the lumped density of |kappa|.  Composite trapezoid in u.
    """
    _check(form, kappa)
    ts = np.asarray(t_grid, dtype=float)
    if np.any(ts <= 0):
        raise ValueError("kato_constant needs t > 0")
    steps = max(int(steps), 64)
    rho = kappa.abs().density()
    out = []
    for t in ts:
        us = np.linspace(0.0, t, steps + 1)
        vals = _flow_on_grid(form.pair, rho, us)
        integral = np.trapezoid(vals, us, axis=0) if hasattr(np, "trapezoid") else np.trapz(vals, us, axis=0)
        out.append(float(np.max(2.0 * integral)))
    return np.array(out)


def _flow_on_grid(pair_, x, ts):
    if pair_.dense_ok:
        vals, vecs = pair_.eig()
        coef = vecs.T @ (pair_.mass * x)
        return (np.exp(-np.outer(ts, vals)) * coef) @ vecs.T
    out = [x]
    for a, b in zip(ts[:-1], ts[1:]):
        out.append(pair_.exp_apply(out[-1], b - a))
    return np.array(out)


def fit_form_bound(form, kappa, rho_prime):
    """Smallest alpha' with <|kappa| | f^2> <= rho' E(f) + alpha' |f|^2 for all f.

    Top eigenvalue of the pencil (V_|kappa| - rho' K, M), found with Lanczos on
    the mass-symmetrized matrix.
    """
    _check(form, kappa)
    if not 0.0 < rho_prime < 1.0:
        raise ValueError("rho_prime must lie in (0, 1)")
    s = 1.0 / np.sqrt(form.mass)
    A = sp.diags(kappa.abs().lumped()) - rho_prime * form.stiffness
    S = (sp.diags(s) @ A @ sp.diags(s)).tocsr()
    n = S.shape[0]
    if n <= 50:
        top = float(np.linalg.eigvalsh(S.toarray())[-1])
    else:
        top = float(spla.eigsh(S, k=1, which="LA", tol=1e-13, ncv=min(n, 40), v0=start_vector(n))[0][0])
    return FormBound(rho_prime=float(rho_prime), alpha_prime=top)
