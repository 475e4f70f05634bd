"""Energy, carre du champ, divergence and Gauss-Green on the unit disk.

Run: python3 demos/calculus_on_the_disk.py
"""
import numpy as np

from tamedcalc import assemble, build_model, carre_du_champ, energy, heat_flow, laplacian
from tamedcalc.first_order import gauss_green_residual, gradient, measure_divergence, normal_component

space = build_model("disk", refinement=3)
form = assemble(space)
x, y = space.vertices.T
f = np.sin(2 * x) * y
g = np.exp(x + y)

print(f"disk, level 3: {space.n_vertices} vertices, {space.n_cells} triangles")
print(f"E(f, g)             = {energy(form, f, g):.12f}")
print(f"int Gamma(f, g) dm  = {np.sum(form.mass * carre_du_champ(form, f, g)):.12f}")
print(f"-int g Delta f dm   = {-np.sum(form.mass * g * laplacian(form, f)):.12f}")

# the divergence of a gradient is a measure with a boundary part
X = gradient(space, x)
div = measure_divergence(X)
n = normal_component(X).boundary
bx = space.vertices[space.boundary_vertices, 0]
print(f"max |n X - x| on the circle: {np.max(np.abs(n - bx)):.3e}")
print(f"Gauss-Green residual for X = grad x, h = g: {gauss_green_residual(X, g):.2e}")
print(f"total mass of DIV X: {div.total():.2e} (interior and boundary parts cancel against the constant 1)")

# the heat flow is Markovian: mass preserving, positivity preserving
u0 = np.maximum(0.0, 0.3 - np.hypot(x - 0.3, y))
for t in (0.0, 0.01, 0.1):
    u = heat_flow(form, u0, t)
    print(f"t = {t:<5} mass {form.mass @ u:.10f}  min {u.min():+.2e}  max {u.max():.4f}")
