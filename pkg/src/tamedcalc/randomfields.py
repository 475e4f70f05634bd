"""Seeded smooth random test functions.

Generator "tamedcalc-smooth/1": a random combination of low-frequency
trigonometric modes in ambient coordinates, composed with a shape-specific
map whose normal derivative vanishes on the boundary.  The same continuum
function is produced at every refinement level for a fixed seed, so
residuals across a ladder are comparable.
"""
import numpy as np

GENERATOR = "tamedcalc-smooth/1"
MODES = 3


def neumann_coordinates(space, points=None):
    """Ambient coordinates reparametrized to have zero normal derivative on the boundary."""
    p = np.asarray(space.vertices if points is None else points, dtype=float)
    shape, size = space.shape, space.size_params
    if shape == "interval":
        L = size[0]
        return np.cos(np.pi * p / L)
    if shape == "rectangle":
        return np.cos(np.pi * p / np.asarray(size))
    if shape == "disk":
        R = size[0]
        r2 = np.sum(p ** 2, axis=1, keepdims=True)
        return p * (3 * R ** 2 - r2) / (2 * R ** 2)
    if shape == "annulus":
        a, b = size
        r = np.linalg.norm(p, axis=1, keepdims=True)
        q = a + (b - a) * 0.5 * (1 - np.cos(np.pi * (r - a) / (b - a)))
        return p * q / r
    if shape == "hemisphere":
        out = p.copy()
        out[:, 2] = p[:, 2] ** 2 / size[0]
        return out
    return p


def _frequency_scale(space):
    if space.shape == "torus":
        return 2 * np.pi / np.asarray(space.size_params)
    return None


def smooth_field(space, seed, index=0, modes=MODES):
    """Vertex values of the random smooth function number ``index`` for ``seed``."""
    rng = np.random.Generator(np.random.PCG64([int(seed), int(index)]))
    p = np.asarray(space.vertices, dtype=float)
    if space.shape != "torus":
        p = neumann_coordinates(space, p)
    D = p.shape[1]
    per = _frequency_scale(space)
    out = np.zeros(len(p))
    for _ in range(modes):
        if per is None:
            k = rng.uniform(-1.5, 1.5, size=D)
        else:
            k = rng.integers(-1, 2, size=D) * per
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.normal()
        out += amp * np.cos(p @ k + phase)
    return out


def smooth_fields(space, seed, count, modes=MODES):
    return [smooth_field(space, seed, i, modes) for i in range(count)]
