"""Discrete sixth-order system with essential boundary constraints.

The bilinear form ``a_h(v, w) = int D(G^2 v) : D(G^2 w)`` is assembled as
``K = sum_{j,k} H_jk^T S H_jk`` (each recovered-Hessian component is a P1
field, so the P1 stiffness ``S`` integrates it exactly).  Boundary conditions
on values, recovered gradients and the normal-normal recovered Hessian enter
as linear constraints ``C u = g`` enforced by Lagrange multipliers.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .fem import (
    BoundaryData,
    ProblemSpec,
    assemble_load,
    assemble_stiffness,
    quadrature_rule,
)
from .mesh import Mesh
from .recovery import RecoveryOperator, build_recovery
from .sparse import (
    SolveInfo,
    csr,
    dedup_constraints,
    dump_matrix,
    independent_rows,
    solve_saddle,
    triple_product,
)

__all__ = [
    "DiscreteSystem",
    "Constraints",
    "Diagnostics",
    "assemble_system",
    "build_constraints",
    "select_constraints",
    "solve_bvp",
]

log = logging.getLogger(__name__)


def assemble_system(mesh: Mesh, recovery: RecoveryOperator, stiffness) -> sp.csr_array:
    """``K = sum_{j,k} (G_j G_k)^T S (G_j G_k)``, exactly symmetric."""
    n = mesh.n_vertices
    if stiffness.shape != (n, n) or recovery.n != n:
        raise ValueError(
            f"dimension mismatch: mesh has {n} vertices, S is {stiffness.shape}, G is {recovery.n}"
        )
    h = recovery.hessian()
    # one product with the four blocks stacked: [H_jk] (4N x N), blockdiag(S)
    stacked = csr(sp.vstack([h[j][l] for j in range(2) for l in range(2)]))
    s4 = sp.block_diag([csr(stiffness)] * 4, format="csr")
    return triple_product(stacked, s4)


KINDS = ("value", "normal", "hessian", "tangential")
DEPENDENCE_TOL = 0.1


@dataclass
class Constraints:
    """Constraint rows ``C u = g`` with their origins.

    ``kinds[i]`` is one of :data:`KINDS`; ``dropped`` lists the labels of rows
    removed so far, each with the reason.
    """

    c: sp.csr_array
    g: np.ndarray
    labels: list
    kinds: list
    dropped: list = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.c.shape[0]

    def subset(self, rows, reason: str) -> "Constraints":
        rows = np.asarray(rows, dtype=np.int64)
        gone = np.setdiff1d(np.arange(self.n_rows), rows)
        return Constraints(
            csr(self.c[rows]),
            self.g[rows],
            [self.labels[i] for i in rows],
            [self.kinds[i] for i in rows],
            self.dropped + [f"{self.labels[i]} ({reason})" for i in gone],
        )


def _boundary_data(spec: ProblemSpec, p: np.ndarray):
    if spec.bc is BoundaryData.HOMOGENEOUS:
        return 0.0, np.zeros(2), np.zeros((2, 2))
    x, y = np.array([p[0]]), np.array([p[1]])
    return (
        float(np.asarray(spec.u(x, y)).ravel()[0]),
        np.asarray(spec.grad(x, y)).reshape(2),
        np.asarray(spec.hess(x, y)).reshape(2, 2),
    )


def build_constraints(mesh: Mesh, recovery: RecoveryOperator, spec: ProblemSpec) -> Constraints:
    """Essential boundary conditions as rows of ``C u = g``.

    For every boundary vertex and frame ``(n, t)`` the rows are the nodal
    value, ``n . G``, ``t . G`` and ``n^T G^2 n``.  Non-corner vertices use the
    averaged frame; corners use one frame per adjacent boundary edge.  The
    right-hand sides are zero or are taken from the exact solution.  Rows equal
    up to sign are removed by :func:`~grfem.sparse.dedup_constraints`.
    """
    if spec.bc is BoundaryData.FROM_EXACT and not spec.has_exact:
        raise ValueError("boundary data from the exact solution needs exact callbacks")
    gx, gy = recovery.gx, recovery.gy
    h = recovery.hessian()
    rows, rhs, labels, kinds = [], [], [], []

    def push(row, val, vertex, kind):
        rows.append(row)
        rhs.append(val)
        x, y = mesh.vertices[vertex]
        labels.append(f"{kind} row at boundary vertex {vertex} ({x:.6g}, {y:.6g})")
        kinds.append(kind)

    n_vert = mesh.n_vertices
    for v, info in mesh.frames.items():
        gd, grad, hess = _boundary_data(spec, mesh.vertices[v])
        if info.corner:
            pairs = [(fr.normal, fr.tangent) for fr in info.frames]
        else:
            pairs = [(info.normal, info.tangent)]
        e = sp.csr_array(([1.0], ([0], [v])), shape=(1, n_vert))
        gxr, gyr = gx[[v]], gy[[v]]
        hr = [[h[j][k][[v]] for k in range(2)] for j in range(2)]
        for nrm, tan in pairs:
            push(e, gd, v, "value")
            push(nrm[0] * gxr + nrm[1] * gyr, float(grad @ nrm), v, "normal")
            push(tan[0] * gxr + tan[1] * gyr, float(grad @ tan), v, "tangential")
            row = sum(nrm[j] * nrm[k] * hr[j][k] for j in range(2) for k in range(2))
            push(row, float(nrm @ hess @ nrm), v, "hessian")

    c = csr(sp.vstack(rows)) if rows else csr(sp.csr_array((0, n_vert)))
    g = np.asarray(rhs, dtype=float)
    c, g, kept = dedup_constraints(c, g, labels)
    cons = Constraints(c, g, [labels[i] for i in kept], [kinds[i] for i in kept])
    cons.dropped = [f"{labels[i]} (duplicate)" for i in np.setdiff1d(np.arange(len(labels)), kept)]
    return cons


def select_constraints(cons: Constraints, tol: float = DEPENDENCE_TOL) -> Constraints:
    """Keep a numerically independent subset of the constraint rows.

    Rows are visited by kind in the order value, normal, hessian, tangential
    (boundary order within a kind) and kept when their distance to the span of
    the rows already kept exceeds ``tol`` times their norm; see
    :func:`~grfem.sparse.independent_rows`.  The discrete boundary rows are
    strongly coupled: the tangential rows lie within a few percent of the span
    of the value and normal rows, and enforcing nearly dependent rows amplifies
    the small inconsistencies of collocated boundary data.
    """
    rank = {k: i for i, k in enumerate(KINDS)}
    order = np.argsort([rank[k] for k in cons.kinds], kind="stable")
    kept, _ = independent_rows(cons.c, order, tol)
    return cons.subset(kept, f"dependent within tolerance {tol:g}")


@dataclass
class DiscreteSystem:
    k: sp.csr_array
    f: np.ndarray
    constraints: Constraints
    recovery: RecoveryOperator
    stiffness: sp.csr_array
    u: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None


@dataclass
class Diagnostics:
    """Norms and solver statistics of one solve."""

    energy_norm: float  # ||D G^2 u_h||_0
    f_norm: float  # ||f||_0 (degree-6 quadrature)
    solve: SolveInfo
    n_constraints: int  # rows enforced
    n_dropped: int  # rows removed as duplicates or dependent
    dropped_residual: float  # max |(C u - g)_i| over the dependent rows left out
    system: DiscreteSystem = field(repr=False)


def _f_norm(mesh, f):
    from .fem import quadrature_points

    rule = quadrature_rule(6)
    xq = quadrature_points(mesh, rule)
    fq = np.broadcast_to(np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float), xq.shape[:2])
    return float(np.sqrt((mesh.signed_areas[:, None] * rule.weights * fq**2).sum()))


def solve_bvp(
    mesh: Mesh,
    spec: ProblemSpec,
    method="ppr",
    recovery=None,
    dump_dir=None,
    dependence_tol: float = DEPENDENCE_TOL,
):
    """Solve ``-Laplace^3 u = f`` with the recovery-based P1 scheme.

    Returns
    -------
    u_h : ndarray
        Nodal values.
    diagnostics : Diagnostics
    """
    stiffness = assemble_stiffness(mesh)
    recovery = recovery or build_recovery(mesh, method)
    k = assemble_system(mesh, recovery, stiffness)
    f = assemble_load(mesh, spec.f, quadrature_rule(4))
    full = build_constraints(mesh, recovery, spec)
    cons = select_constraints(full, dependence_tol)
    if dump_dir is not None:
        dump_matrix(k, f"{dump_dir}/K_{mesh.n_vertices}.mtx")
        dump_matrix(cons.c, f"{dump_dir}/C_{mesh.n_vertices}.mtx")
    u, lam, info = solve_saddle(k, cons.c, f, cons.g, dropped_rows=cons.dropped)
    system = DiscreteSystem(k, f, cons, recovery, stiffness, u, lam)
    # from the Hessian fields: u^T K u cancels badly on fine meshes
    hu = [hjk @ u for row in recovery.hessian() for hjk in row]
    energy = float(np.sqrt(max(sum(w @ (stiffness @ w) for w in hu), 0.0)))
    resid = np.abs(full.c @ u - full.g)
    diag = Diagnostics(
        energy,
        _f_norm(mesh, spec.f),
        info,
        cons.n_rows,
        len(cons.dropped),
        float(resid.max()) if len(resid) else 0.0,
        system,
    )
    log.info(
        "solved %d dofs, %d constraints (%d dropped), kkt residual %.2e",
        mesh.n_vertices,
        cons.n_rows,
        len(cons.dropped),
        info.kkt_residual,
    )
    return u, diag
