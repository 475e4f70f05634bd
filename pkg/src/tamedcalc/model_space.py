"""Weighted simplicial model spaces.

A model space is a simplicial mesh of a compact manifold (possibly with
boundary) together with a weight ``w``.  The interior measure is
``m = exp(-2w) vol`` and the boundary measure is ``s = exp(-2w) surface``,
both lumped to vertices.
"""
import hashlib
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import gamma as gamma_fn, hyp2f1
from scipy.spatial import cKDTree

SHAPES = ("interval", "rectangle", "disk", "annulus", "sphere", "hemisphere", "torus")

DEFAULT_SIZES = {
    "interval": (1.0,),
    "rectangle": (1.0, 1.0),
    "disk": (1.0,),
    "annulus": (0.5, 1.0),
    "sphere": (1.0,),
    "hemisphere": (1.0,),
    "torus": (1.0, 1.0),
}

ANGLE_TOL = 1e-9


class MeshError(ValueError):
    """Raised for malformed or invalid meshes."""


class MeshFormatError(MeshError):
    pass


class MeshInvariantError(MeshError):
    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


# -- weights -----------------------------------------------------------------

_WEIGHT_NAMESPACE = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "arctan2",
                 "arctan", "arcsin", "arccos", "sinh", "cosh", "tanh", "pi",
                 "minimum", "maximum", "where")
}


def evaluate_descriptor(desc, points):
    """Evaluate a scalar function descriptor at an (n, D) array of points.

    ``desc`` may be None (zero), a number, a callable taking the point array,
    or an expression string in the variables x, y, z and r.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    if desc is None:
        return np.zeros(n)
    if callable(desc):
        return np.broadcast_to(np.asarray(desc(points), dtype=float), (n,)).copy()
    if isinstance(desc, (int, float, np.number)):
        return np.full(n, float(desc))
    if isinstance(desc, str):
        s = desc.strip()
        try:
            return np.full(n, float(s))
        except ValueError:
            pass
        cols = [points[:, i] if i < points.shape[1] else np.zeros(n) for i in range(3)]
        env = dict(_WEIGHT_NAMESPACE)
        env.update(x=cols[0], y=cols[1], z=cols[2], r=np.sqrt(np.sum(points ** 2, axis=1)))
        try:
            val = eval(compile(s, "<descriptor>", "eval"), {"__builtins__": {}}, env)
        except Exception as exc:
            raise ValueError(f"cannot evaluate descriptor {desc!r}: {exc}") from None
        return np.broadcast_to(np.asarray(val, dtype=float), (n,)).copy()
    raise TypeError(f"unsupported descriptor type {type(desc).__name__}")


# -- the space ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelSpace:
    """Weighted simplicial mesh with lumped interior and boundary measures.

    Derived geometry (per-cell edge matrices, metrics, masses, normals) is
    computed once at construction; the object is immutable afterwards.
    """
    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: np.ndarray
    weight_w: np.ndarray
    shape: str = None
    size_params: tuple = ()
    level: int = None
    weight_spec: object = None
    period: np.ndarray = None
    check_obtuse: bool = field(default=True, repr=False)

    def __post_init__(self):
        put = lambda k, v: object.__setattr__(self, k, v)
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        C = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.dim + 1)
        B = np.asarray(self.boundary_facets, dtype=np.int64).reshape(-1, self.dim)
        w = np.asarray(self.weight_w, dtype=float).reshape(-1)
        if len(w) != len(V):
            raise MeshInvariantError("weight length", f"{len(w)} != {len(V)}")
        for k, v in (("vertices", V), ("cells", C), ("boundary_facets", B), ("weight_w", w)):
            v.setflags(write=False)
            put(k, v)
        self._check_indices()
        self._build_geometry()
        self._check_invariants()

    # geometry ---------------------------------------------------------------
    def _edge_vectors(self, a, b):
        diff = self.vertices[b] - self.vertices[a]
        if self.period is not None:
            per = np.asarray(self.period, dtype=float)
            diff = diff - per * np.round(diff / per)
        return diff

    def displacement(self, a, b):
        """Ambient vectors p_b - p_a (minimum image on periodic meshes)."""
        return self._edge_vectors(np.asarray(a), np.asarray(b))

    def _build_geometry(self):
        put = lambda k, v: object.__setattr__(self, k, v)
        d = self.dim
        C = self.cells
        J = np.stack([self._edge_vectors(C[:, 0], C[:, a]) for a in range(1, d + 1)], axis=2)
        G = np.einsum("mka,mkb->mab", J, J)
        det = np.linalg.det(G)
        if np.any(det <= 0) or not np.all(np.isfinite(det)):
            bad = int(np.argmin(det))
            raise MeshInvariantError("cell metric positive definite", f"cell {bad} is degenerate")
        Ginv = np.linalg.inv(G)
        vol = np.sqrt(det) / float(np.prod(np.arange(1, d + 1)))
        ew = np.exp(-2.0 * self.weight_w)
        cell_measure = vol * ew[C].mean(axis=1)
        n = len(self.vertices)
        mass = np.bincount(C.ravel(), np.repeat(cell_measure / (d + 1), d + 1), minlength=n)

        # outward conormals of boundary facets, from the owning cell
        owner = self._facet_owner()
        bverts = np.unique(self.boundary_facets.ravel()) if len(self.boundary_facets) else np.zeros(0, np.int64)
        bidx = -np.ones(n, dtype=np.int64)
        bidx[bverts] = np.arange(len(bverts))
        D = self.vertices.shape[1]
        bnormal = np.zeros((len(bverts), D))
        bmass = np.zeros(len(bverts))
        for f, facet in enumerate(self.boundary_facets):
            cell = C[owner[f]]
            other = [v for v in cell if v not in facet][0]
            if d == 1:
                nvec = -self._edge_vectors(np.array([facet[0]]), np.array([other]))[0]
                meas = ew[facet[0]]
                nvec = nvec / np.linalg.norm(nvec)
                bmass[bidx[facet[0]]] += meas
                bnormal[bidx[facet[0]]] += nvec
            else:
                a, b = facet
                e = self._edge_vectors(np.array([a]), np.array([b]))[0]
                u = self._edge_vectors(np.array([a]), np.array([other]))[0]
                perp = u - (u @ e) / (e @ e) * e
                nvec = -perp / np.linalg.norm(perp)
                length = np.linalg.norm(e)
                meas = length * 0.5 * (ew[a] + ew[b])
                for v in (a, b):
                    bmass[bidx[v]] += 0.5 * meas
                    bnormal[bidx[v]] += length * nvec
        if len(bverts):
            bnormal /= np.linalg.norm(bnormal, axis=1)[:, None]

        put("edge_matrix", J)
        put("cell_metric", G)
        put("cell_metric_inv", Ginv)
        put("cell_volume", vol)
        put("cell_measure", cell_measure)
        put("interior_mass", mass)
        put("boundary_vertices", bverts)
        put("boundary_index", bidx)
        put("boundary_mass", bmass)
        put("boundary_normals", bnormal)
        put("vertex_normals", self._vertex_normals())
        put("tangent_frames", self._tangent_frames())
        lengths = [np.linalg.norm(self._edge_vectors(C[:, a], C[:, b]), axis=1)
                   for a, b in combinations(range(d + 1), 2)]
        put("h", float(np.max(lengths)))
        digest = hashlib.sha1()
        for arr in (self.vertices, self.cells, self.boundary_facets, self.weight_w):
            digest.update(np.ascontiguousarray(arr).tobytes())
        put("tag", digest.hexdigest()[:12])

    def _facet_owner(self):
        """Cell index owning each boundary facet (raises if incidence is wrong)."""
        inc = self.facet_incidence()
        owner = np.zeros(len(self.boundary_facets), dtype=np.int64)
        for f, facet in enumerate(self.boundary_facets):
            key = tuple(sorted(int(v) for v in facet))
            cells = inc.get(key)
            if cells is None or len(cells) != 1:
                raise MeshInvariantError(
                    "facet incidence",
                    f"boundary facet {key} belongs to {0 if cells is None else len(cells)} cells")
            owner[f] = cells[0]
        return owner

    def facet_incidence(self):
        inc = {}
        for c, cell in enumerate(self.cells):
            for facet in combinations(sorted(int(v) for v in cell), self.dim):
                inc.setdefault(facet, []).append(c)
        return inc

    def _vertex_normals(self):
        D = self.vertices.shape[1]
        if D == self.dim:
            return None
        if self.dim != 2 or D != 3:
            raise MeshInvariantError("embedding", "only surfaces in R^3 are supported")
        C = self.cells
        J = self.edge_matrix
        nrm = np.cross(J[:, :, 0], J[:, :, 1])
        out = np.zeros((len(self.vertices), 3))
        for a in range(3):
            np.add.at(out, C[:, a], nrm)
        out /= np.linalg.norm(out, axis=1)[:, None]
        return _refine_normals(self.vertices, C, out)

    def _tangent_frames(self):
        """Orthonormal tangent basis (n, D, d) at every vertex."""
        n, D = self.vertices.shape
        if self.vertex_normals is None:
            return np.broadcast_to(np.eye(D)[None], (n, D, D)).copy()
        nu = self.vertex_normals
        ref = np.where(np.abs(nu[:, [0]]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
        t1 = ref - np.sum(ref * nu, axis=1)[:, None] * nu
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        t2 = np.cross(nu, t1)
        return np.stack([t1, t2], axis=2)

    # invariants -------------------------------------------------------------
    def _check_indices(self):
        n = len(self.vertices)
        for name, arr in (("cells", self.cells), ("boundary", self.boundary_facets)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise MeshError(f"vertex index out of range in {name}")

    def _check_invariants(self):
        inc = self.facet_incidence()
        bset = {tuple(sorted(int(v) for v in f)) for f in self.boundary_facets}
        for facet, cells in inc.items():
            if len(cells) > 2:
                raise MeshInvariantError("facet incidence", f"facet {facet} in {len(cells)} cells")
            if len(cells) == 1 and facet not in bset:
                raise MeshInvariantError("facet incidence", f"unlisted boundary facet {facet}")
            if len(cells) == 2 and facet in bset:
                raise MeshInvariantError("facet incidence", f"interior facet {facet} listed as boundary")
        if np.any(self.interior_mass <= 0) or np.any(self.boundary_mass <= 0):
            raise MeshInvariantError("positive masses")
        if self.check_obtuse:
            worst, cell = self.max_angle()
            if worst > np.pi / 2 + ANGLE_TOL:
                raise MeshInvariantError(
                    "non-obtuse", f"cell {cell} has angle {np.degrees(worst):.3f} deg")

    def max_angle(self):
        """Largest simplex angle over all cells and the cell attaining it."""
        if self.dim == 1:
            return 0.0, 0
        C = self.cells
        worst = np.zeros(len(C))
        for a in range(3):
            b, c = (a + 1) % 3, (a + 2) % 3
            u = self._edge_vectors(C[:, a], C[:, b])
            v = self._edge_vectors(C[:, a], C[:, c])
            cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            worst = np.maximum(worst, np.arccos(np.clip(cosang, -1, 1)))
        i = int(np.argmax(worst))
        return float(worst[i]), i

    # convenience ------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def ambient_dim(self):
        return self.vertices.shape[1]

    @property
    def has_boundary(self):
        return len(self.boundary_facets) > 0

    def interior_vertices(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.flatnonzero(mask)

    def boundary_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = True
        return mask

    def total_mass(self):
        return float(self.interior_mass.sum())

    def boundary_length(self):
        return float(self.boundary_mass.sum())

    def evaluate(self, desc):
        """Evaluate a function descriptor at the vertices."""
        return evaluate_descriptor(desc, self.vertices)

    def centroids(self):
        d = self.dim
        return self.vertices[self.cells[:, 0]] + self.edge_matrix.sum(axis=2) / (d + 1)


# -- shape builders ------------------------------------------------------------

def _refine_normals(V, C, nu):
    """Second-order vertex normals from quadratic height fits over the two-ring."""
    import scipy.sparse as sp
    n = len(V)
    rows = np.repeat(C, 3, axis=1).ravel()
    cols = np.tile(C, (1, 3)).ravel()
    A = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    A2 = (A @ A).tocsr()
    out = nu.copy()
    ref = np.where(np.abs(nu[:, [0]]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    t1 = ref - np.sum(ref * nu, axis=1)[:, None] * nu
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(nu, t1)
    for v in range(n):
        nb = A2.indices[A2.indptr[v]:A2.indptr[v + 1]]
        nb = nb[nb != v]
        if len(nb) < 5:
            continue
        rel = V[nb] - V[v]
        y = np.stack([rel @ t1[v], rel @ t2[v]], axis=1)
        z = rel @ nu[v]
        sc = np.max(np.abs(y))
        y = y / sc
        design = np.column_stack([y, 0.5 * y[:, 0] ** 2, y[:, 0] * y[:, 1], 0.5 * y[:, 1] ** 2])
        a = np.linalg.lstsq(design, z, rcond=None)[0][:2] / sc
        vec = nu[v] - a[0] * t1[v] - a[1] * t2[v]
        out[v] = vec / np.linalg.norm(vec)
    return out


def _interval(L, n):
    x = np.linspace(0.0, L, n + 1)
    cells = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    return x[:, None], cells, np.array([[0], [n]]), {}


def _rectangle(Lx, Ly, nx, ny):
    xs, ys = np.linspace(0, Lx, nx + 1), np.linspace(0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    V = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = lambda i, j: j * (nx + 1) + i
    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            cells += [(a, b, c), (a, c, d)]
    bnd = [(idx(i, 0), idx(i + 1, 0)) for i in range(nx)]
    bnd += [(idx(nx, j), idx(nx, j + 1)) for j in range(ny)]
    bnd += [(idx(i + 1, ny), idx(i, ny)) for i in range(nx)]
    bnd += [(idx(0, j + 1), idx(0, j)) for j in range(ny)]
    return V, np.array(cells), np.array(bnd), {}


def _torus(Lx, Ly, nx, ny):
    xs, ys = np.arange(nx) * Lx / nx, np.arange(ny) * Ly / ny
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    V = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = lambda i, j: (j % ny) * nx + (i % nx)
    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            cells += [(a, b, c), (a, c, d)]
    return V, np.array(cells), np.zeros((0, 2), dtype=np.int64), {"period": np.array([Lx, Ly])}


def _hex_disk(n):
    """Triangular lattice filling a regular hexagon of lattice radius n."""
    pts, index = [], {}
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            if abs(i + j) <= n:
                index[(i, j)] = len(pts)
                pts.append((i, j))
    cells = []
    for (i, j), a in index.items():
        b, c, d = index.get((i + 1, j)), index.get((i, j + 1)), index.get((i + 1, j - 1))
        if b is not None and c is not None:
            cells.append((a, b, c))
        if b is not None and d is not None:
            cells.append((a, d, b))
    ij = np.array(pts, dtype=float)
    xy = np.stack([ij[:, 0] + 0.5 * ij[:, 1], np.sqrt(3) / 2 * ij[:, 1]], axis=1)
    hexnorm = np.max(np.abs(np.stack([ij[:, 0], ij[:, 1], ij[:, 0] + ij[:, 1]], axis=1)), axis=1)
    cells = np.array(cells)
    return xy, hexnorm, cells


def _boundary_from_cells(cells, dim):
    inc = {}
    for c, cell in enumerate(cells):
        for facet in combinations(range(dim + 1), dim):
            key = tuple(sorted(cell[list(facet)]))
            inc.setdefault(key, []).append((c, facet))
    out = []
    for key, owners in inc.items():
        if len(owners) == 1:
            c, facet = owners[0]
            cell = cells[c]
            if dim == 2:
                # induced orientation of a counter-clockwise cell
                missing = [a for a in range(3) if a not in facet][0]
                a, b = (missing + 1) % 3, (missing + 2) % 3
                out.append((cell[a], cell[b]))
            else:
                out.append(tuple(cell[list(facet)]))
    return np.array(out, dtype=np.int64).reshape(-1, dim)


def _conformal_hex_disk(n):
    """Hexagonal lattice mapped conformally onto the closed unit disk.

    The inverse Schwarz-Christoffel map sends the regular hexagon to the disk
    smoothly away from its six corners, so the mesh stays a smooth image of a
    regular lattice and triangle angles are preserved to leading order.
    """
    xy, hexnorm, cells = _hex_disk(n)
    z = (xy[:, 0] + 1j * xy[:, 1]) / n
    c = gamma_fn(5 / 6) / (gamma_fn(7 / 6) * gamma_fn(2 / 3))
    w = z.astype(complex)
    corner = (hexnorm == n) & np.isclose(np.abs(z), 1.0)
    free = ~corner & (np.abs(z) > 0)
    ang = np.angle(z[free])
    hexr = np.cos(np.pi / 6) / np.cos(np.mod(ang, np.pi / 3) - np.pi / 6)
    u = 0.999 * z[free] / hexr
    zf = z[free]
    for _ in range(100):
        step = (c * u * hyp2f1(1 / 3, 1 / 6, 7 / 6, u ** 6) - zf) * (1 - u ** 6) ** (1 / 3) / c
        nxt = u - step
        out = np.abs(nxt) >= 1
        nxt[out] = u[out] - 0.5 * step[out]
        nxt[out] = np.where(np.abs(nxt[out]) >= 1, nxt[out] / np.abs(nxt[out]) * (1 - 1e-15), nxt[out])
        done = np.max(np.abs(nxt - u)) < 1e-15
        u = nxt
        if done:
            break
    w[free] = u
    bnd = hexnorm == n
    w[bnd] /= np.abs(w[bnd])
    return np.stack([w.real, w.imag], axis=1), cells


def _disk(R, n):
    V, cells = _conformal_hex_disk(n)
    return R * V, cells, _boundary_from_cells(cells, 2), {}


def _hemisphere(R, n):
    # inverse stereographic projection keeps the map conformal
    w, cells = _conformal_hex_disk(n)
    r2 = np.sum(w ** 2, axis=1)
    V = R * np.column_stack([2 * w, 1 - r2]) / (1 + r2)[:, None]
    return V, cells, _boundary_from_cells(cells, 2), {}


def _annulus(R_in, R_out, nr, m):
    radii = np.linspace(R_in, R_out, nr + 1)
    V, cells = [], []
    for k, r in enumerate(radii):
        off = (k % 2) * np.pi / m
        th = off + 2 * np.pi * np.arange(m) / m
        V += list(zip(r * np.cos(th), r * np.sin(th)))
    idx = lambda k, i: k * m + (i % m)
    for k in range(nr):
        for i in range(m):
            if k % 2 == 0:
                cells.append((idx(k, i), idx(k, i + 1), idx(k + 1, i)))
                cells.append((idx(k + 1, i), idx(k, i + 1), idx(k + 1, i + 1)))
            else:
                cells.append((idx(k, i), idx(k, i + 1), idx(k + 1, i + 1)))
                cells.append((idx(k, i), idx(k + 1, i + 1), idx(k + 1, i)))
    cells = np.array(cells)
    return np.array(V), cells, _boundary_from_cells(cells, 2), {}


def _icosphere(R, subdiv):
    """Uniformly subdivided flat icosahedron, projected radially once.

    Projecting only at the end keeps each face a smooth image of a regular
    lattice, which the pointwise second-order quantities need.
    """
    t = (1 + np.sqrt(5)) / 2
    V = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
                  [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], float)
    F = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    V = list(V / np.linalg.norm(V, axis=1)[:, None])
    F = np.array(F)
    for _ in range(subdiv):
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                V.append(0.5 * (V[a] + V[b]))
                mid[key] = len(V) - 1
            return mid[key]

        new = []
        for a, b, c in F:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        F = np.array(new)
    V = np.array(V)
    V /= np.linalg.norm(V, axis=1)[:, None]
    return R * V, F, np.zeros((0, 2), dtype=np.int64), {}


def _orient_planar(V, cells):
    if V.shape[1] != 2 or cells.shape[1] != 3:
        return cells
    a, b, c = V[cells[:, 0]], V[cells[:, 1]], V[cells[:, 2]]
    cross = (b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0]
    cells = cells.copy()
    flip = cross < 0
    cells[flip] = cells[flip][:, [0, 2, 1]]
    return cells


def mesh_data(shape, size_params, refinement):
    """Vertices, cells, boundary facets and extras for a named shape."""
    r = int(refinement)
    p = tuple(float(s) for s in size_params) if size_params else DEFAULT_SIZES[shape]
    if shape == "interval":
        return _interval(p[0], 4 * 2 ** r)
    if shape == "rectangle":
        Lx, Ly = p
        base = min(Lx, Ly)
        nx = max(1, int(round(4 * Lx / base))) * 2 ** r
        ny = max(1, int(round(4 * Ly / base))) * 2 ** r
        return _rectangle(Lx, Ly, nx, ny)
    if shape == "torus":
        Lx, Ly = p
        base = min(Lx, Ly)
        nx = max(3, int(round(4 * Lx / base)) * 2 ** r)
        ny = max(3, int(round(4 * Ly / base)) * 2 ** r)
        return _torus(Lx, Ly, nx, ny)
    if shape == "disk":
        return _disk(p[0], 2 * 2 ** r)
    if shape == "hemisphere":
        return _hemisphere(p[0], 2 * 2 ** r)
    if shape == "annulus":
        R_in, R_out = p
        nr = 2 * 2 ** r
        dr = (R_out - R_in) / nr
        m = int(np.ceil(2 * np.pi * R_out / (1.5 * dr)))
        m += m % 2
        return _annulus(R_in, R_out, nr, m)
    if shape == "sphere":
        return _icosphere(p[0], r + 1)
    raise MeshError(f"unsupported shape {shape!r}")


def build_model(shape, size_params=None, refinement=0, weight=None):
    """Build a named model space at the given refinement level.

    Level r halves the mesh size of level r-1.  ``weight`` is a function
    descriptor for w (None means w = 0).
    """
    if shape not in SHAPES:
        raise MeshError(f"unsupported shape {shape!r}")
    if refinement < 0:
        raise ValueError("refinement must be >= 0")
    sizes = tuple(size_params) if size_params else DEFAULT_SIZES[shape]
    if any(s <= 0 for s in sizes):
        raise ValueError("size parameters must be positive")
    if shape == "annulus" and sizes[0] >= sizes[1]:
        raise ValueError("annulus needs inner radius < outer radius")
    V, cells, bnd, extra = mesh_data(shape, sizes, refinement)
    cells = _orient_planar(V, np.asarray(cells))
    if shape in ("disk", "annulus"):
        bnd = _boundary_from_cells(cells, 2)
    dim = 1 if shape == "interval" else 2
    w = evaluate_descriptor(weight, V)
    return ModelSpace(dim=dim, vertices=V, cells=cells, boundary_facets=bnd, weight_w=w,
                      shape=shape, size_params=sizes, level=int(refinement),
                      weight_spec=weight, period=extra.get("period"))


def refine(space):
    """Uniform refinement.

    Named shapes are rebuilt one level finer (so curved boundaries stay on
    the continuum boundary); loaded meshes are split at edge midpoints.
    """
    if space.shape is not None and space.level is not None:
        return build_model(space.shape, space.size_params, space.level + 1, space.weight_spec)
    d = space.dim
    V = space.vertices
    if space.period is not None:
        raise MeshError("generic refinement of periodic meshes is not supported")
    mid = {}
    newV = list(V)
    neww = list(space.weight_w)

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in mid:
            newV.append(0.5 * (V[a] + V[b]))
            neww.append(0.5 * (space.weight_w[a] + space.weight_w[b]))
            mid[key] = len(newV) - 1
        return mid[key]

    cells, bnd = [], []
    if d == 1:
        for a, b in space.cells:
            m = midpoint(a, b)
            cells += [(a, m), (m, b)]
        bnd = [tuple(f) for f in space.boundary_facets]
    else:
        for a, b, c in space.cells:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            cells += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        for a, b in space.boundary_facets:
            m = midpoint(a, b)
            bnd += [(a, m), (m, b)]
    newV = np.array(newV)
    w = np.array(neww) if space.weight_spec is None else evaluate_descriptor(space.weight_spec, newV)
    if space.weight_spec is None and not np.any(space.weight_w):
        w = np.zeros(len(newV))
    return ModelSpace(dim=d, vertices=newV, cells=np.array(cells), boundary_facets=np.array(bnd),
                      weight_w=w, weight_spec=space.weight_spec)


# -- text format -----------------------------------------------------------------

def _tokens(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_mesh(path):
    """Parse a ``tamedmesh 1 <dim>`` text file into a ModelSpace."""
    lines = list(_tokens(path))
    if not lines:
        raise MeshFormatError("line 1: empty file")
    lineno, head = lines[0]
    if len(head) != 3 or head[0] != "tamedmesh" or head[1] != "1":
        raise MeshFormatError(f"line {lineno}: expected header 'tamedmesh 1 <dim>'")
    try:
        dim = int(head[2])
    except ValueError:
        raise MeshFormatError(f"line {lineno}: bad dimension {head[2]!r}") from None
    if dim not in (1, 2):
        raise MeshFormatError(f"line {lineno}: dimension must be 1 or 2")
    sections = {}
    i = 1
    while i < len(lines):
        lineno, tok = lines[i]
        name = tok[0]
        if name == "weight":
            count = None
        elif name in ("vertices", "cells", "boundary"):
            if len(tok) != 2:
                raise MeshFormatError(f"line {lineno}: expected '{name} <count>'")
            try:
                count = int(tok[1])
            except ValueError:
                raise MeshFormatError(f"line {lineno}: bad count {tok[1]!r}") from None
        else:
            raise MeshFormatError(f"line {lineno}: unknown section {name!r}")
        if name in sections:
            raise MeshFormatError(f"line {lineno}: duplicate section {name!r}")
        if count is None:
            count = len(sections.get("vertices", []))
        rows = lines[i + 1:i + 1 + count]
        if len(rows) < count:
            raise MeshFormatError(f"line {lineno}: section {name!r} expects {count} rows")
        sections[name] = rows
        i += 1 + count
    for req in ("vertices", "cells"):
        if req not in sections:
            raise MeshFormatError(f"line {lines[-1][0]}: missing section {req!r}")

    def parse(rows, width, kind, cast):
        out = []
        for ln, tok in rows:
            if width is not None and len(tok) != width:
                raise MeshFormatError(f"line {ln}: expected {width} values, got {len(tok)}")
            try:
                out.append([cast(t) for t in tok])
            except ValueError:
                raise MeshFormatError(f"line {ln}: bad {kind} value") from None
        return out

    verts = parse(sections["vertices"], None, "coordinate", float)
    widths = {len(v) for v in verts}
    if len(widths) > 1:
        raise MeshFormatError("inconsistent vertex coordinate count")
    cells = parse(sections["cells"], dim + 1, "index", int)
    bnd = parse(sections.get("boundary", []), dim, "index", int)
    weight = None
    if "weight" in sections:
        weight = [r[0] for r in parse(sections["weight"], 1, "weight", float)]
    n = len(verts)
    for rows, kind in ((cells, "cells"), (bnd, "boundary")):
        for r in rows:
            if any(v < 0 or v >= n for v in r):
                raise MeshError(f"vertex index out of range in {kind}")
    return ModelSpace(dim=dim, vertices=np.array(verts, dtype=float),
                      cells=np.array(cells, dtype=np.int64).reshape(-1, dim + 1),
                      boundary_facets=np.array(bnd, dtype=np.int64).reshape(-1, dim),
                      weight_w=np.zeros(n) if weight is None else np.array(weight))


def save_mesh(space, path):
    """Write a ModelSpace in the text format understood by :func:`load_mesh`."""
    with open(path, "w") as fh:
        fh.write(f"tamedmesh 1 {space.dim}\n")
        fh.write(f"vertices {space.n_vertices}\n")
        for v in space.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        fh.write(f"cells {space.n_cells}\n")
        for c in space.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")
        fh.write(f"boundary {len(space.boundary_facets)}\n")
        for f in space.boundary_facets:
            fh.write(" ".join(str(int(i)) for i in f) + "\n")
        if np.any(space.weight_w):
            fh.write("weight\n")
            for w in space.weight_w:
                fh.write(f"{float(w)!r}\n")


def nearest_vertex(space, point):
    return int(cKDTree(space.vertices).query(np.asarray(point, dtype=float))[1])


def mesh_size(space):
    """Longest edge length (minimum image on periodic meshes)."""
    C = space.cells
    d = space.dim
    h = 0.0
    for a in range(d + 1):
        for b in range(a + 1, d + 1):
            h = max(h, float(np.max(np.linalg.norm(space.displacement(C[:, a], C[:, b]), axis=1))))
    return h
