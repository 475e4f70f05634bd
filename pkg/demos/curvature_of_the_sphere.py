"""The Ricci measure of the round sphere and the second fundamental form of the disk.

The sphere has ric = 1, so ric(X, X) / |X|^2 -> 1; the unit circle has II = 1.
Run: python3 demos/curvature_of_the_sphere.py
"""
import numpy as np

from tamedcalc import build_model, mesh_size, taming_measure
from tamedcalc.curvature import ricci_density_ratio_error, ricci_measure, weitzenboeck_residual
from tamedcalc.fields import nodal_inner
from tamedcalc.first_order import gradient

print("sphere: L1 deviation of ric(X,X) from |X|^2, and the Weitzenboeck residual")
prev = None
for level in (1, 2, 3, 4):
    s = build_model("sphere", refinement=level)
    x, y, z = s.vertices.T
    X = gradient(s, x * y + z)
    rep = ricci_measure(X, X, taming_measure(s))
    err = ricci_density_ratio_error(X, rep)
    order = "" if prev is None else f"  order {np.log(prev[0] / err) / np.log(prev[1] / mesh_size(s)):.2f}"
    print(f"  level {level}  h = {mesh_size(s):.4f}  ratio error {err:.4f}  "
          f"Weitzenboeck {weitzenboeck_residual(X, X):.4f}{order}")
    prev = (err, mesh_size(s))

print("disk: L1 deviation of II(X,X) from |X|^2 on the unit circle")
for level in (1, 2, 3, 4):
    s = build_model("disk", refinement=level)
    x, y = s.vertices.T
    X = gradient(s, 3 * x - x * (x ** 2 + y ** 2))
    rep = ricci_measure(X, X, taming_measure(s))
    x2 = np.asarray(nodal_inner(X, X))[s.boundary_vertices]
    err = np.sum(s.boundary_mass * np.abs(rep.ii_boundary - x2)) / np.sum(s.boundary_mass * x2)
    print(f"  level {level}  h = {mesh_size(s):.4f}  II error {err:.4f}")
