"""Vertex-indexed scalar fields tagged with their owning space."""
import numpy as np


class SpaceMismatchError(ValueError):
    pass


class ScalarField(np.ndarray):
    """A per-vertex array that remembers which space it lives on.

    Behaves like a plain numpy array; arithmetic keeps the tag of the first
    tagged operand and reductions return plain scalars.
    """

    def __new__(cls, values, space_tag=None):
        obj = np.asarray(values, dtype=float).view(cls)
        obj.space_tag = space_tag
        return obj

    def __array_finalize__(self, obj):
        self.space_tag = getattr(obj, "space_tag", None)

    def __array_wrap__(self, out, context=None, return_scalar=False):
        if out.ndim == 0:
            return out[()]
        return super().__array_wrap__(out, context, return_scalar) if _WRAP3 else super().__array_wrap__(out, context)

    def __reduce__(self):
        state = super().__reduce__()
        return state[0], state[1], (state[2], self.space_tag)

    def __setstate__(self, state):
        base, tag = state
        super().__setstate__(base)
        self.space_tag = tag

    @property
    def values(self):
        return np.asarray(self)


try:
    np.ndarray.__array_wrap__(np.zeros(1), np.zeros(1), None, False)
    _WRAP3 = True
except TypeError:
    _WRAP3 = False


def field_values(f, space, name="field"):
    """Validate a ScalarField or array against ``space`` and return a float array."""
    tag = getattr(f, "space_tag", None)
    if tag is not None and tag != space.tag:
        raise SpaceMismatchError(f"{name} belongs to space {tag}, expected {space.tag}")
    arr = np.asarray(f, dtype=float)
    if arr.shape[0] != space.n_vertices:
        raise SpaceMismatchError(f"{name} has length {arr.shape[0]}, expected {space.n_vertices}")
    return arr


def scalar(space, values):
    return ScalarField(values, space.tag)
