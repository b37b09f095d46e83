"""Non-square domains: the unit disk and the L-shaped domain.

Example 3 (u = exp(x + y) on the unit disk) runs on a ring mesh refined
regularly, with new boundary midpoints projected onto the circle.  Example 4
(u = x^6 - y^6 on (-1, 1)^2 minus the lower-right quadrant) runs on uniform
L-shape meshes.  Its solution is a polynomial, so the reentrant corner does
not limit the convergence rates.

Run:  python demos/04_curved_and_reentrant.py
"""
from grfem.convergence import format_report, run_convergence

for example, pattern, levels in ((3, "disk", 4), (4, "lshape", [8, 16, 32, 64])):
    report = run_convergence(example, pattern, levels)
    print(f"Example {example} on the {pattern} family")
    print(format_report(report, "markdown"))
