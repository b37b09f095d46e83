"""Convergence of the recovery-based linear element scheme for Example 1.

Example 1 has the exact solution u = x^3 (1-x)^3 y^3 (1-y)^3 on the unit
square with homogeneous clamped data.  We solve on three regular-pattern
meshes and print the error table.  Orders are with respect to the number of
unknowns (DoF), so first order in h shows up as 0.5.

Expect De and D1re near 1 (second order in h: u_h and the recovered gradient
are superconvergent) and D1e, D2e and D3e near 0.5.

Run:  python demos/01_convergence_table.py
"""
from grfem.convergence import format_report, run_convergence

report = run_convergence(example=1, pattern="regular", levels=[16, 32, 64], method="ppr")
print(format_report(report, "markdown"))

print("||D G^2 u_h|| / ||f|| per level (stays bounded):")
print("  " + "  ".join(f"{r:.4f}" for r in report.stability_ratios))
print("worst saddle-point backward error:", max(lv.kkt_residual for lv in report.levels))
