"""The three gradient recovery operators as sparse matrices.

G maps the nodal values of a linear finite element function to nodal values of
a continuous approximation of its gradient.  Applying it twice gives a
recovered Hessian G^2, whose element derivative stands in for third
derivatives in the sixth-order bilinear form.

This script checks three properties:

1. PPR reproduces gradients of quadratics exactly, up to the boundary.
2. WA, SPR and PPR coincide at vertices with full patches on the regular
   pattern.
3. The recovered Hessian of the interpolant converges at O(h^2) away from the
   boundary, and its derivative at O(h).

Run:  python demos/02_recovery_operators.py
"""
import numpy as np

from grfem import build_ppr, build_spr, build_wa, generate_lshape, generate_uniform, interpolate
from grfem.fem import evaluate_at_quadrature, quadrature_points, quadrature_rule, recovered_fields
from grfem.problems import example2
from grfem.recovery import third_derivative_field

mesh = generate_lshape(16)
x, y = mesh.vertices.T
ppr = build_ppr(mesh)
err = max(np.abs(ppr.gx @ (x * y) - y).max(), np.abs(ppr.gy @ (x * y) - x).max())
print(f"1. PPR on u = xy (L-shape, {mesh.n_vertices} vertices): max nodal gradient error {err:.1e}")
print(f"   patch layers used: {np.bincount(ppr.layers)[1:]} vertices with 1, 2, 3 layers")

mesh = generate_uniform("regular", 16)
inner = ~(mesh.is_boundary_vertex | (mesh.vertex_adjacency @ mesh.is_boundary_vertex.astype(int) > 0))
ops = {name: build(mesh) for name, build in (("wa", build_wa), ("spr", build_spr), ("ppr", build_ppr))}
gap = max(np.abs((ops[a].gx - ops["ppr"].gx)[inner].toarray()).max() for a in ("wa", "spr"))
print(f"2. largest difference of interior rows of Gx between methods: {gap:.1e}")

spec = example2()
rule = quadrature_rule(6)
print("3. interior errors of the recovered Hessian of u_I (|c - 0.5| < 0.375):")
prev = None
for n in (16, 32, 64):
    m = generate_uniform("regular", n)
    _, hess = recovered_fields(interpolate(m, spec.u), build_ppr(m))
    xq = quadrature_points(m, rule)
    centers = m.vertices[m.triangles].mean(axis=1)
    keep = np.abs(centers - 0.5).max(axis=1) < 0.375
    w = (m.areas[:, None] * rule.weights)[keep]
    d2 = ((spec.hess(xq[..., 0], xq[..., 1]) - evaluate_at_quadrature(m, hess, rule)) ** 2).sum(axis=(-1, -2))
    d3 = ((spec.d3(xq[..., 0], xq[..., 1]) - third_derivative_field(m, hess)[:, None]) ** 2).sum(axis=(-1, -2, -3))
    e = np.array([np.sqrt((w * d2[keep]).sum()), np.sqrt((w * d3[keep]).sum())])
    rates = "" if prev is None else "  orders in h: {:.2f} {:.2f}".format(*np.log2(prev / e))
    print(f"   n={n:3d}  D2 {e[0]:.2e}  D3 {e[1]:.2e}{rates}")
    prev = e
