"""P1 element calculus: geometry, quadrature, assembly, interpolation, error norms."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .sparse import csr

__all__ = [
    "ElementGeometry",
    "QuadratureRule",
    "BoundaryData",
    "ProblemSpec",
    "ErrorNorms",
    "element_geometry",
    "gradient_matrices",
    "quadrature_rule",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "interpolate",
    "evaluate_at_quadrature",
    "error_norms",
    "recovered_fields",
]


@dataclass(frozen=True)
class ElementGeometry:
    """Areas and constant basis gradients of every triangle.

    ``grads[t, i]`` is the gradient of the hat function of local vertex ``i``.
    """

    areas: np.ndarray
    grads: np.ndarray


def element_geometry(mesh: Mesh) -> ElementGeometry:
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas
    # grad phi_i = rot(p_{i+1} - p_{i+2}) / (2 area)
    nxt = p[:, [1, 2, 0]]
    prv = p[:, [2, 0, 1]]
    d = nxt - prv
    grads = np.stack([d[..., 1], -d[..., 0]], axis=-1) / (2 * area)[:, None, None]
    return ElementGeometry(area, grads)


def gradient_matrices(mesh: Mesh, geom: Optional[ElementGeometry] = None):
    """Sparse (T, N) maps from nodal values to per-element gradient components."""
    geom = geom or element_geometry(mesh)
    t = mesh.triangles
    rows = np.repeat(np.arange(len(t)), 3)
    shape = (len(t), mesh.n_vertices)
    bx = csr(sp.coo_array((geom.grads[..., 0].ravel(), (rows, t.ravel())), shape=shape))
    by = csr(sp.coo_array((geom.grads[..., 1].ravel(), (rows, t.ravel())), shape=shape))
    return bx, by


# ---------------------------------------------------------------------------
# quadrature

# Symmetric rules (Dunavant); orbit parameters refined to double precision.
# ("c", w): centroid; ("a", a, w): (a, a, 1-2a); ("abc", a, b, w): permutations
# of (a, b, 1-a-b).  Weights are normalized to sum to one.
_ORBITS = {
    2: [("a", 0.5, 1 / 3)],
    4: [
        ("a", 0.44594849091596488632, 0.2233815896780114657),
        ("a", 0.09157621350977074346, 0.10995174365532186764),
    ],
    6: [
        ("a", 0.24928674517091042129, 0.11678627572637936603),
        ("a", 0.06308901449150222834, 0.050844906370206816921),
        ("abc", 0.053145049844816947353, 0.31035245103378440542, 0.082851075618373575194),
    ],
    8: [
        ("c", 0.14431560767778716825),
        ("a", 0.45929258829272315603, 0.095091634267284624794),
        ("a", 0.17056930775176020662, 0.10321737053471825028),
        ("a", 0.050547228317030975458, 0.032458497623198080311),
        ("abc", 0.0083947774099576053372, 0.26311282963463811342, 0.027230314174434994265),
    ],
}


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (Q, 3) and weights (Q,) summing to one."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Symmetric Gaussian rule on the triangle, exact for polynomials of ``degree``.

    The degree-2 rule uses the three edge midpoints.
    """
    if degree not in _ORBITS:
        raise ValueError(f"no rule of degree {degree}; available: {sorted(_ORBITS)}")
    pts, wts = [], []
    for orbit in _ORBITS[degree]:
        if orbit[0] == "c":
            pts.append((1 / 3, 1 / 3, 1 / 3))
            wts.append(orbit[1])
        elif orbit[0] == "a":
            a, w = orbit[1], orbit[2]
            b = 1 - 2 * a
            for p in ((a, a, b), (a, b, a), (b, a, a)):
                pts.append(p)
                wts.append(w)
        else:
            a, b, w = orbit[1:]
            c = 1 - a - b
            for p in sorted(set(itertools.permutations((a, b, c)))):
                pts.append(p)
                wts.append(w)
    points = np.array(pts)
    weights = np.array(wts)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points, weights, degree)


def quadrature_points(mesh: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points, shape (T, Q, 2)."""
    p = mesh.vertices[mesh.triangles]
    return np.einsum("qi,tid->tqd", rule.points, p)


# ---------------------------------------------------------------------------
# problem data


class BoundaryData(enum.Enum):
    HOMOGENEOUS = "homogeneous"
    FROM_EXACT = "from_exact"


Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """Right-hand side, optional exact solution and boundary data source.

    Callbacks take coordinate arrays ``x, y`` of a common shape ``s`` and
    return arrays of shape ``s`` (``u``, ``f``), ``s + (2,)`` (``grad``),
    ``s + (2, 2)`` (``hess``) and ``s + (2, 2, 2)`` (``d3``).
    """

    f: Field
    u: Optional[Field] = None
    grad: Optional[Field] = None
    hess: Optional[Field] = None
    d3: Optional[Field] = None
    bc: BoundaryData = BoundaryData.HOMOGENEOUS
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "bc", BoundaryData(self.bc))
        if self.bc is BoundaryData.FROM_EXACT and not self.has_exact:
            raise ValueError("boundary data from the exact solution needs u, grad, hess and d3")
        if self.d3 is not None:
            rng = np.random.default_rng(0)
            x, y = rng.random((2, 10))
            t = np.asarray(self.d3(x, y))
            for perm in itertools.permutations((1, 2, 3)):
                diff = np.abs(t - t.transpose((0, *perm))).max()
                if diff > 1e-10 * max(1.0, np.abs(t).max()):
                    raise ValueError("third-derivative callback is not symmetric")

    @property
    def has_exact(self) -> bool:
        return None not in (self.u, self.grad, self.hess, self.d3)


# ---------------------------------------------------------------------------
# assembly


def _assemble(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return csr(sp.coo_array((local.ravel(), (rows, cols)), shape=(n, n)))


def assemble_stiffness(mesh: Mesh, geom: Optional[ElementGeometry] = None):
    """P1 stiffness ``S_pq = sum_t area(t) grad phi_p . grad phi_q``."""
    geom = geom or element_geometry(mesh)
    local = geom.areas[:, None, None] * np.einsum("tid,tjd->tij", geom.grads, geom.grads)
    s = _assemble(mesh, local)
    return csr(0.5 * (s + s.T))


def assemble_mass(mesh: Mesh):
    a = mesh.signed_areas
    local = a[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _assemble(mesh, local)


def assemble_load(mesh: Mesh, f: Field, rule: Optional[QuadratureRule] = None):
    """``F_p = sum_t int_t f phi_p`` with a rule of degree >= 4."""
    rule = rule or quadrature_rule(4)
    if rule.degree < 4:
        raise ValueError("load assembly needs a rule of degree >= 4")
    xq = quadrature_points(mesh, rule)
    fq = np.asarray(f(xq[..., 0], xq[..., 1]), dtype=float)
    fq = np.broadcast_to(fq, xq.shape[:2])
    local = mesh.signed_areas[:, None] * np.einsum("tq,q,qi->ti", fq, rule.weights, rule.points)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), local.ravel())
    return out


def interpolate(mesh: Mesh, u: Field) -> np.ndarray:
    """Nodal values of ``u``."""
    v = mesh.vertices
    return np.asarray(u(v[:, 0], v[:, 1]), dtype=float) * np.ones(mesh.n_vertices)


def evaluate_at_quadrature(mesh: Mesh, nodal: np.ndarray, rule: QuadratureRule):
    """Values of the P1 function with nodal values ``nodal`` at the rule points."""
    return np.einsum("qi,ti...->tq...", rule.points, np.asarray(nodal)[mesh.triangles])


def element_derivative(mesh: Mesh, nodal: np.ndarray, geom: Optional[ElementGeometry] = None):
    """Per-element gradient of P1 fields; trailing axis is the derivative index.

    ``nodal`` has shape (N, ...); the result has shape (T, ..., 2).
    """
    geom = geom or element_geometry(mesh)
    vals = np.asarray(nodal)[mesh.triangles]
    return np.einsum("ti...,tid->t...d", vals, geom.grads)


def recovered_fields(u_h, recovery):
    """Nodal recovered gradient (N, 2) and recovered Hessian (N, 2, 2).

    ``hessian[:, j, k]`` holds ``G_j G_k u_h``.
    """
    g = np.column_stack([recovery.gx @ u_h, recovery.gy @ u_h])
    h = recovery.hessian()
    hess = np.empty((len(u_h), 2, 2))
    for j in range(2):
        for k in range(2):
            hess[:, j, k] = h[j][k] @ u_h
    return g, hess


@dataclass(frozen=True)
class ErrorNorms:
    """The five reported errors."""

    De: float
    D1e: float
    D1re: float
    D2e: float
    D3e: float

    def as_tuple(self):
        return (self.De, self.D1e, self.D1re, self.D2e, self.D3e)


def error_norms(mesh: Mesh, u_h, recovery, spec: ProblemSpec, rule: Optional[QuadratureRule] = None):
    """L2 norms of ``u - u_h``, ``grad u - grad u_h``, ``grad u - G u_h``,
    ``D2 u - D(G u_h)`` and ``D3 u - D(G^2 u_h)``.

    ``D(G u_h)`` is the full, unsymmetrized per-element Jacobian of the
    recovered gradient.  The third-derivative tensor entry ``(i, j, k)`` is
    ``d_i (G_j G_k u_h)`` and is compared with ``u_ijk`` for all eight triples.
    """
    if not spec.has_exact:
        raise ValueError("error norms need the exact solution and its derivatives")
    rule = rule or quadrature_rule(6)
    if rule.degree < 6:
        raise ValueError("error norms need a rule of degree >= 6")
    u_h = np.asarray(u_h, dtype=float)
    geom = element_geometry(mesh)
    xq = quadrature_points(mesh, rule)
    x, y = xq[..., 0], xq[..., 1]
    wa = geom.areas[:, None] * rule.weights[None, :]

    def norm(diff):
        sq = diff**2
        if sq.ndim > 2:
            sq = sq.reshape(sq.shape[0], sq.shape[1], -1).sum(axis=-1)
        return float(np.sqrt(max((wa * sq).sum(), 0.0)))

    g, hess = recovered_fields(u_h, recovery)
    de = norm(spec.u(x, y) - evaluate_at_quadrature(mesh, u_h, rule))
    grad_ex = spec.grad(x, y)
    du_h = element_derivative(mesh, u_h, geom)[:, None, :]
    d1e = norm(grad_ex - du_h)
    d1re = norm(grad_ex - evaluate_at_quadrature(mesh, g, rule))
    jac = element_derivative(mesh, g, geom)[:, None, :, :]  # [t, 1, j, k] = d_k G_j
    d2e = norm(spec.hess(x, y) - jac)
    dh = element_derivative(mesh, hess, geom)  # [t, j, k, i] = d_i H_jk
    t3 = np.moveaxis(dh, -1, 1)[:, None]  # [t, 1, i, j, k]
    d3e = norm(spec.d3(x, y) - t3)
    return ErrorNorms(de, d1e, d1re, d2e, d3e)
