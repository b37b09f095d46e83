"""Gradient recovery operators as sparse matrices, and the recovered Hessian.

Three constructions of the nodal recovered gradient ``(G v)(p)``:

* ``wa``  -- area-weighted average of the element gradients on the patch of p;
* ``spr`` -- least-squares linear fit to element gradients sampled at the
  barycenters of the patch elements, evaluated at p;
* ``ppr`` -- least-squares quadratic fit to nodal values on the patch
  vertices, differentiated at p.

Fitting patches start at the element patch of the vertex and grow (up to two
times) by adding the elements that share an edge with the current patch, until
the fit has enough samples and a scaled condition number below 1e8.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .fem import ElementGeometry, element_geometry, element_derivative, gradient_matrices
from .mesh import Mesh
from .sparse import csr, spgemm

__all__ = [
    "Method",
    "RecoveryOperator",
    "RecoveryError",
    "build_wa",
    "build_spr",
    "build_ppr",
    "build_recovery",
    "recovered_hessian",
    "third_derivative_field",
]

MAX_LAYERS = 3
COND_MAX = 1e8


class RecoveryError(RuntimeError):
    """No admissible fitting patch for a vertex."""


class Method(enum.Enum):
    WA = "wa"
    SPR = "spr"
    PPR = "ppr"


@dataclass(eq=False)
class RecoveryOperator:
    """Sparse ``gx``, ``gy`` (N x N) mapping nodal values to recovered gradients.

    ``layers[p]`` is the number of element layers in the patch used at ``p``.
    """

    gx: sp.csr_array
    gy: sp.csr_array
    method: Method
    layers: np.ndarray
    _hessian: Optional[list] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.gx.shape[0]

    def components(self):
        return (self.gx, self.gy)

    def apply(self, v):
        """Nodal recovered gradient, shape (N, 2)."""
        return np.column_stack([self.gx @ v, self.gy @ v])

    def hessian(self):
        """``[[Hxx, Hxy], [Hyx, Hyy]]`` with ``H[j][k] = G_j G_k`` (cached)."""
        if self._hessian is None:
            self._hessian = recovered_hessian(self)
        return self._hessian


# ---------------------------------------------------------------------------
# patches


def _element_layers(mesh: Mesh, k: int) -> sp.csr_array:
    """Boolean (N, T): the element patch of each vertex grown ``k - 1`` times.

    Each growth step adds the elements sharing an edge with the current patch.
    """
    out = mesh.vertex_triangles.astype(np.int64)
    adj = mesh.triangle_adjacency.astype(np.int64)
    for _ in range(k - 1):
        out = (out @ adj).astype(bool).astype(np.int64)
    out = sp.csr_array(out, dtype=bool)
    out.sort_indices()
    return out


def _layer_vertices(mesh: Mesh, k: int) -> sp.csr_array:
    """Boolean (N, N): vertices of the layer-``k`` patch of each vertex."""
    t = mesh.triangles
    tv = sp.csr_array(
        (np.ones(t.size, dtype=np.int64), (np.repeat(np.arange(len(t)), 3), t.ravel())),
        shape=(len(t), mesh.n_vertices),
    )
    out = sp.csr_array((_element_layers(mesh, k).astype(np.int64) @ tv).astype(bool))
    out.sort_indices()
    return out


def _grouped_rows(pattern: sp.csr_array, rows: np.ndarray):
    """Yield ``(rows_g, cols_g)`` batches of rows with equal stored counts."""
    counts = np.diff(pattern.indptr)[rows]
    for m in np.unique(counts):
        sel = rows[counts == m]
        starts = pattern.indptr[sel]
        cols = pattern.indices[starts[:, None] + np.arange(m)[None, :]]
        yield sel, cols


def _scaled_offsets(centers, samples):
    """Sample offsets from the centers, divided by each patch radius."""
    d = samples - centers[:, None, :]
    radius = np.sqrt((d**2).sum(axis=-1)).max(axis=1)
    radius = np.where(radius > 0, radius, 1.0)
    return d / radius[:, None, None], radius


def _batched_pinv(v):
    """Pseudoinverses and 2-norm condition numbers of a stack of matrices."""
    u, s, vt = np.linalg.svd(v, full_matrices=False)
    cond = np.where(s[:, -1] > 0, s[:, 0] / np.where(s[:, -1] > 0, s[:, -1], 1.0), np.inf)
    pinv = np.einsum("bji,bj,bkj->bik", vt, 1.0 / np.where(s > 0, s, np.inf), u)
    return pinv, cond


def _fit_rows(mesh, n_unknowns, design, sample_sets, fill):
    """Grow patches layer by layer and record least-squares rows.

    ``sample_sets(k)`` returns the CSR pattern of layer-``k`` samples per vertex;
    ``design(vertices, cols)`` returns the scaled design matrices and radii;
    ``fill(vertices, cols, pinv, radius)`` stores the operator rows.
    """
    n = mesh.n_vertices
    layers = np.zeros(n, dtype=np.int64)
    todo = np.arange(n)
    for k in range(1, MAX_LAYERS + 1):
        if not len(todo):
            break
        pattern = sample_sets(k)
        failed = []
        for sel, cols in _grouped_rows(pattern, todo):
            if cols.shape[1] < n_unknowns:
                failed.append(sel)
                continue
            v, radius = design(sel, cols)
            pinv, cond = _batched_pinv(v)
            ok = cond < COND_MAX
            failed.append(sel[~ok])
            if ok.any():
                fill(sel[ok], cols[ok], pinv[ok], radius[ok])
                layers[sel[ok]] = k
        todo = np.sort(np.concatenate(failed)) if failed else np.zeros(0, dtype=np.int64)
    if len(todo):
        p = int(todo[0])
        raise RecoveryError(
            f"no well-conditioned fitting patch within {MAX_LAYERS} layers at vertex {p} "
            f"({tuple(mesh.vertices[p])})"
        )
    return layers


def _assemble_rows(n, ncols, entries):
    rows, cols, vals = (np.concatenate(x) for x in zip(*entries)) if entries else ([], [], [])
    return csr(sp.coo_array((vals, (rows, cols)), shape=(n, ncols)))


# ---------------------------------------------------------------------------
# constructions


def build_wa(mesh: Mesh, geom: Optional[ElementGeometry] = None) -> RecoveryOperator:
    """Weighted averaging: ``(G v)(p) = |w_p|^-1 int_{w_p} grad v``."""
    geom = geom or element_geometry(mesh)
    bx, by = gradient_matrices(mesh, geom)
    t = mesh.triangles
    rows = t.ravel()
    cols = np.repeat(np.arange(len(t)), 3)
    w = sp.coo_array((np.repeat(geom.areas, 3), (rows, cols)), shape=(mesh.n_vertices, len(t)))
    w = csr(w)
    patch_area = np.asarray(w.sum(axis=1)).ravel()
    w = csr(sp.diags_array(1.0 / patch_area) @ w)
    return RecoveryOperator(spgemm(w, bx), spgemm(w, by), Method.WA, np.ones(mesh.n_vertices, dtype=np.int64))


def build_spr(mesh: Mesh, geom: Optional[ElementGeometry] = None, area_weighted: bool = False) -> RecoveryOperator:
    """Superconvergent patch recovery with barycenter sampling.

    Each gradient component is fitted by a linear polynomial in the least
    squares sense over the element barycenters of the patch and evaluated at
    the patch vertex.  ``area_weighted`` weights each sample by its element
    area, the discrete counterpart of a local L2 projection.
    """
    geom = geom or element_geometry(mesh)
    bx, by = gradient_matrices(mesh, geom)
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    sqrt_area = np.sqrt(geom.areas)
    entries = []

    def design(sel, cols):
        off, radius = _scaled_offsets(mesh.vertices[sel], bary[cols])
        v = np.concatenate([np.ones(cols.shape + (1,)), off], axis=-1)
        if area_weighted:
            v = v * sqrt_area[cols][..., None]
        return v, radius

    def fill(sel, cols, pinv, radius):
        w = pinv[:, 0, :]
        if area_weighted:
            w = w * sqrt_area[cols]
        entries.append((np.repeat(sel, cols.shape[1]), cols.ravel(), w.ravel()))

    layers = _fit_rows(mesh, 3, design, lambda k: _element_layers(mesh, k), fill)
    weights = _assemble_rows(mesh.n_vertices, mesh.n_triangles, entries)
    return RecoveryOperator(spgemm(weights, bx), spgemm(weights, by), Method.SPR, layers)


def build_ppr(mesh: Mesh) -> RecoveryOperator:
    """Polynomial preserving recovery.

    A quadratic is fitted in the least squares sense to the nodal values on
    the patch vertices (coordinates centered at p and scaled by the patch
    radius); its gradient at p is the recovered value.  Exact for quadratics.
    """
    p = mesh.vertices
    ex, ey = [], []

    def design(sel, cols):
        off, radius = _scaled_offsets(p[sel], p[cols])
        x, y = off[..., 0], off[..., 1]
        v = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=-1)
        return v, radius

    def fill(sel, cols, pinv, radius):
        r = np.repeat(sel, cols.shape[1])
        ex.append((r, cols.ravel(), (pinv[:, 1, :] / radius[:, None]).ravel()))
        ey.append((r, cols.ravel(), (pinv[:, 2, :] / radius[:, None]).ravel()))

    layers = _fit_rows(mesh, 6, design, lambda k: _layer_vertices(mesh, k), fill)
    n = mesh.n_vertices
    return RecoveryOperator(_assemble_rows(n, n, ex), _assemble_rows(n, n, ey), Method.PPR, layers)


def build_recovery(mesh: Mesh, method="ppr") -> RecoveryOperator:
    method = Method(method)
    if method is Method.WA:
        return build_wa(mesh)
    if method is Method.SPR:
        return build_spr(mesh)
    return build_ppr(mesh)


def recovered_hessian(op: RecoveryOperator):
    """Sparse ``[[Gx Gx, Gx Gy], [Gy Gx, Gy Gy]]``; no symmetry is imposed."""
    g = op.components()
    return [[spgemm(g[j], g[k]) for k in range(2)] for j in range(2)]


def third_derivative_field(mesh: Mesh, hess_nodal, geom: Optional[ElementGeometry] = None):
    """Per-element tensor ``T[t, i, j, k] = d_i (H_jk v)`` from nodal (N, 2, 2) fields."""
    dh = element_derivative(mesh, np.asarray(hess_nodal, dtype=float), geom)
    return np.moveaxis(dh, -1, 1)
