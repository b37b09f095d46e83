"""Triangulations: structured patterns, red refinement, boundary frames, file I/O.

A :class:`Mesh` is an immutable pair of arrays (``vertices``, ``triangles``)
plus derived connectivity computed lazily.  Generators cover the four
translation-invariant patterns of the unit square, the L-shaped domain and the
unit disk; :func:`load_mesh` reads Triangle-style ``.node``/``.ele`` files.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Mesh",
    "MeshError",
    "MeshPattern",
    "BoundaryFrame",
    "VertexFrames",
    "generate_uniform",
    "generate_lshape",
    "generate_disk",
    "refine_regular",
    "load_mesh",
    "write_mesh",
    "boundary_frames",
]

CORNER_ANGLE_TOL = 1e-8
DUPLICATE_TOL = 1e-12


class MeshError(ValueError):
    """Invalid or inconsistent triangulation."""


class MeshPattern(enum.Enum):
    REGULAR = "regular"
    CHEVRON = "chevron"
    CRISSCROSS = "crisscross"
    UNIONJACK = "unionjack"
    DISK = "disk"
    LSHAPE = "lshape"
    IMPORTED = "imported"


SQUARE_PATTERNS = (
    MeshPattern.REGULAR,
    MeshPattern.CHEVRON,
    MeshPattern.CRISSCROSS,
    MeshPattern.UNIONJACK,
)


@dataclass(frozen=True)
class BoundaryFrame:
    """Outward normal and tangent of one boundary edge."""

    edge: int
    normal: np.ndarray
    tangent: np.ndarray


@dataclass(frozen=True)
class VertexFrames:
    vertex: int
    frames: tuple[BoundaryFrame, ...]
    corner: bool
    # averaged frame, meaningful for non-corner vertices
    normal: np.ndarray
    tangent: np.ndarray


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of a planar domain.

    Parameters
    ----------
    vertices : (N, 2) float array
    triangles : (T, 3) int array, counterclockwise
    pattern : MeshPattern
        Origin of the mesh.  ``DISK`` marks a polygonal approximation of a
        curved boundary: boundary vertices are treated as smooth points.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    pattern: MeshPattern = MeshPattern.IMPORTED

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError(f"vertices must have shape (N, 2), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (T, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle vertex index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def _edge_data(self):
        t = self.triangles
        local = t[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        key = np.sort(local, axis=1)
        edges, inverse, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.reshape(-1, 3), counts, local

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) unique edges, each sorted by vertex index."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(T, 3) edge indices; local edge i joins local vertices i and i+1."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """(B, 3) rows ``(a, b, tri)``: edge a->b traversed counterclockwise."""
        edges, tri_edges, counts, local = self._edge_data
        flat = tri_edges.ravel()
        on_bdry = counts[flat] == 1
        idx = np.nonzero(on_bdry)[0]
        ab = local[idx]
        return np.column_stack([ab, idx // 3])

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        return self.triangle_edges.ravel()[
            3 * self.boundary_edges[:, 2]
            + _local_position(self.triangles, self.boundary_edges)
        ]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges[:, :2])

    @cached_property
    def is_boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = True
        return mask

    @cached_property
    def h_max(self) -> float:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return float(np.sqrt((d * d).sum(axis=1)).max())

    @cached_property
    def vertex_adjacency(self):
        """Symmetric vertex-vertex adjacency as a CSR boolean matrix."""
        from scipy import sparse

        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e), dtype=bool)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_array((data, (rows, cols)), shape=(n, n))

    @cached_property
    def vertex_triangles(self):
        """CSR incidence matrix, rows = vertices, columns = triangles."""
        from scipy import sparse

        t = self.triangles
        rows = t.ravel()
        cols = np.repeat(np.arange(len(t)), 3)
        return sparse.csr_array(
            (np.ones(len(rows), dtype=bool), (rows, cols)),
            shape=(self.n_vertices, len(t)),
        )

    @cached_property
    def triangle_adjacency(self):
        """CSR boolean (T, T): triangles sharing an edge, diagonal included."""
        from scipy import sparse

        t = len(self.triangles)
        te = self.triangle_edges
        inc = sparse.csr_array(
            (np.ones(te.size), (np.repeat(np.arange(t), 3), te.ravel())),
            shape=(t, self.n_edges),
        )
        return sparse.csr_array((inc @ inc.T).astype(bool))

    @cached_property
    def frames(self) -> dict[int, VertexFrames]:
        return boundary_frames(self)

    def validate(self) -> None:
        """Check the structural invariants; raise :class:`MeshError`."""
        if np.any(self.signed_areas <= 0):
            bad = int(np.argmin(self.signed_areas))
            raise MeshError(f"triangle {bad} has non-positive signed area")
        counts = self._edge_data[2]
        if np.any(counts > 2):
            bad = self.edges[np.argmax(counts)]
            raise MeshError(
                f"nonconforming mesh: edge {tuple(bad)} shared by {counts.max()} triangles"
            )
        tree = cKDTree(self.vertices)
        pairs = tree.query_pairs(DUPLICATE_TOL * self.h_max)
        if pairs:
            i, j = sorted(pairs)[0]
            raise MeshError(f"duplicate vertices {i} and {j}")


def _local_position(triangles, bedges):
    """Local edge slot (0, 1, 2) of each oriented boundary edge in its triangle."""
    t = triangles[bedges[:, 2]]
    a = bedges[:, 0]
    pos = np.where(t[:, 0] == a, 0, np.where(t[:, 1] == a, 1, 2))
    return pos


# ---------------------------------------------------------------------------
# generators


def _grid(n, domain):
    x0, x1, y0, y1 = domain
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def _split_cells(n, diag):
    """Two triangles per grid cell.

    ``diag`` is a boolean (n, n) array over cells (row j, column i): True puts
    the diagonal from the lower-left to the upper-right corner.
    """
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    d = diag.ravel()
    up = np.where(
        d[:, None],
        np.column_stack([v00, v10, v11]),
        np.column_stack([v00, v10, v01]),
    )
    down = np.where(
        d[:, None],
        np.column_stack([v00, v11, v01]),
        np.column_stack([v10, v11, v01]),
    )
    return np.vstack([up, down])


def generate_uniform(pattern, n, domain=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Uniform triangulation of a rectangle with ``n`` cells per side.

    Parameters
    ----------
    pattern : MeshPattern or str
        One of regular, chevron, crisscross, unionjack.
    n : int
        Number of grid cells along each side, ``n >= 2``.
    domain : tuple
        ``(x0, x1, y0, y1)``.
    """
    pattern = MeshPattern(pattern)
    if pattern not in SQUARE_PATTERNS:
        raise ValueError(f"generate_uniform does not build {pattern.value} meshes")
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    n = int(n)
    pts = _grid(n, domain)
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    if pattern is MeshPattern.REGULAR:
        tris = _split_cells(n, np.ones((n, n), dtype=bool))
    elif pattern is MeshPattern.CHEVRON:
        tris = _split_cells(n, i % 2 == 0)
    elif pattern is MeshPattern.UNIONJACK:
        tris = _split_cells(n, (i + j) % 2 == 0)
    else:
        x0, x1, y0, y1 = domain
        hx, hy = (x1 - x0) / n, (y1 - y0) / n
        cx = x0 + (i.ravel() + 0.5) * hx
        cy = y0 + (j.ravel() + 0.5) * hy
        centers = np.column_stack([cx, cy])
        c = len(pts) + np.arange(n * n)
        v00 = (j * (n + 1) + i).ravel()
        v10, v01 = v00 + 1, v00 + n + 1
        v11 = v01 + 1
        tris = np.vstack(
            [
                np.column_stack([v00, v10, c]),
                np.column_stack([v10, v11, c]),
                np.column_stack([v11, v01, c]),
                np.column_stack([v01, v00, c]),
            ]
        )
        pts = np.vstack([pts, centers])
    return Mesh(pts, tris, pattern)


def generate_lshape(n) -> Mesh:
    """Regular-pattern mesh of ``[-1, 1]^2 minus [0, 1] x [-1, 0]``.

    ``n`` is the number of cells across the full width 2; it must be even.
    """
    if int(n) != n or n < 2 or n % 2:
        raise ValueError(f"n must be a positive even integer, got {n}")
    n = int(n)
    full = generate_uniform(MeshPattern.REGULAR, n, (-1.0, 1.0, -1.0, 1.0))
    p = full.vertices
    tol = 0.25 * 2.0 / n
    centroids = p[full.triangles].mean(axis=1)
    keep = ~((centroids[:, 0] > 0) & (centroids[:, 1] < 0))
    tris = full.triangles[keep]
    drop = (p[:, 0] > tol) & (p[:, 1] < -tol)
    new_index = np.cumsum(~drop) - 1
    return Mesh(p[~drop], new_index[tris], MeshPattern.LSHAPE)


def generate_disk(n_rings) -> Mesh:
    """Concentric-ring triangulation of the unit disk.

    Ring ``k`` (``k = 1..n_rings``) holds ``6k`` equally spaced vertices at
    radius ``k / n_rings``; the outermost ring lies exactly on the circle.
    """
    if int(n_rings) != n_rings or n_rings < 1:
        raise ValueError(f"n_rings must be a positive integer, got {n_rings}")
    n = int(n_rings)
    pts = [np.zeros((1, 2))]
    starts = [0]
    for k in range(1, n + 1):
        theta = 2 * np.pi * np.arange(6 * k) / (6 * k)
        r = k / n
        ring = np.column_stack([np.cos(theta), np.sin(theta)])
        if k < n:
            ring = r * ring
        pts.append(ring)
        starts.append(starts[-1] + (6 * (k - 1) if k > 1 else 1))
    tris = []
    for k in range(1, n + 1):
        outer0 = starts[k]
        m_out = 6 * k
        if k == 1:
            for s in range(6):
                tris.append((0, outer0 + s, outer0 + (s + 1) % 6))
            continue
        inner0 = starts[k - 1]
        m_in = 6 * (k - 1)
        # walk the six sectors: each sector has k outer and k-1 inner segments
        for s in range(6):
            for q in range(k):
                o = s * k + q
                i = s * (k - 1) + q
                a = outer0 + o
                b = outer0 + (o + 1) % m_out
                c = inner0 + i % m_in
                tris.append((a, b, c))
                if q < k - 1:
                    c2 = inner0 + (i + 1) % m_in
                    tris.append((c, b, c2))
    return Mesh(np.vstack(pts), np.array(tris), MeshPattern.DISK)


def refine_regular(mesh: Mesh, project_boundary: bool = False) -> Mesh:
    """Split every triangle into four through its edge midpoints.

    With ``project_boundary`` the midpoints of boundary edges are pushed
    radially onto the circle through the existing boundary vertices; this is
    only meaningful for disk meshes.
    """
    if project_boundary and mesh.pattern is not MeshPattern.DISK:
        raise ValueError("boundary projection is only defined for disk meshes")
    p = mesh.vertices
    e = mesh.edges
    mid = 0.5 * (p[e[:, 0]] + p[e[:, 1]])
    if project_boundary:
        bids = mesh.boundary_edge_ids
        radius = np.linalg.norm(p[mesh.boundary_vertices], axis=1).mean()
        m = mid[bids]
        mid[bids] = radius * m / np.linalg.norm(m, axis=1)[:, None]
    nv = mesh.n_vertices
    t = mesh.triangles
    te = mesh.triangle_edges + nv
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = te[:, 0], te[:, 1], te[:, 2]
    children = np.vstack(
        [
            np.column_stack([a, ab, ca]),
            np.column_stack([ab, b, bc]),
            np.column_stack([ca, bc, c]),
            np.column_stack([ab, bc, ca]),
        ]
    )
    return Mesh(np.vstack([p, mid]), children, mesh.pattern)


# ---------------------------------------------------------------------------
# boundary geometry


def boundary_frames(mesh: Mesh, angle_tol: float = CORNER_ANGLE_TOL):
    """Per boundary vertex: adjacent-edge frames and a corner flag.

    A vertex is a corner when the normals of its adjacent boundary edges differ
    by more than ``angle_tol`` radians.  On disk meshes the boundary vertices
    sample a smooth curve and are never flagged.

    Returns
    -------
    dict
        vertex index -> :class:`VertexFrames`
    """
    p = mesh.vertices
    be = mesh.boundary_edges
    d = p[be[:, 1]] - p[be[:, 0]]
    length = np.linalg.norm(d, axis=1)
    tangents = d / length[:, None]
    normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
    eid = mesh.boundary_edge_ids
    adjacent: dict[int, list[int]] = {}
    for k, (a, b, _) in enumerate(be):
        adjacent.setdefault(int(a), []).append(k)
        adjacent.setdefault(int(b), []).append(k)
    smooth = mesh.pattern is MeshPattern.DISK
    out = {}
    for v in sorted(adjacent):
        ks = adjacent[v]
        frames = tuple(
            BoundaryFrame(int(eid[k]), normals[k].copy(), tangents[k].copy())
            for k in ks
        )
        nsum = normals[ks].sum(axis=0)
        nrm = np.linalg.norm(nsum)
        if nrm < 1e-14:
            navg = normals[ks[0]].copy()
        else:
            navg = nsum / nrm
        cos = np.clip(normals[ks] @ normals[ks[0]], -1.0, 1.0)
        corner = (not smooth) and bool(np.any(np.arccos(cos) > angle_tol))
        # tangent rotates the outward normal counterclockwise
        tavg = np.array([-navg[1], navg[0]])
        out[v] = VertexFrames(v, frames, corner, navg, tavg)
    return out


# ---------------------------------------------------------------------------
# file I/O


def _read_table(path: Path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append((lineno, line.split()))
    if not rows:
        raise MeshError(f"{path}: empty file")
    return rows


def _parse(path, lineno, tokens, kinds):
    try:
        return [k(tok) for k, tok in zip(kinds, tokens)]
    except ValueError as exc:
        raise MeshError(f"{path}:{lineno}: parse error: {exc}") from None


def load_mesh(path) -> Mesh:
    """Read a Triangle-style ``.node``/``.ele`` pair.

    ``path`` may name either file or the common stem.  Indices may start at 0
    or 1 (taken from the first vertex record).  Clockwise triangles are
    reoriented; degenerate and nonconforming meshes are rejected.
    """
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".node", ".ele") else path
    node_path, ele_path = stem.with_suffix(".node"), stem.with_suffix(".ele")

    rows = _read_table(node_path)
    lineno, head = rows[0]
    if len(head) < 2:
        raise MeshError(f"{node_path}:{lineno}: malformed header")
    nv, dim = _parse(node_path, lineno, head[:2], (int, int))
    if dim != 2:
        raise MeshError(f"{node_path}:{lineno}: only 2D meshes are supported")
    if len(rows) - 1 < nv:
        raise MeshError(f"{node_path}: expected {nv} vertices, found {len(rows) - 1}")
    ids = np.empty(nv, dtype=np.int64)
    pts = np.empty((nv, 2))
    for k, (lineno, tok) in enumerate(rows[1 : nv + 1]):
        if len(tok) < 3:
            raise MeshError(f"{node_path}:{lineno}: expected 'index x y'")
        ids[k], pts[k, 0], pts[k, 1] = _parse(node_path, lineno, tok[:3], (int, float, float))
    base = int(ids[0])
    if base not in (0, 1) or np.any(ids != base + np.arange(nv)):
        raise MeshError(f"{node_path}: vertex indices must be consecutive from 0 or 1")

    rows = _read_table(ele_path)
    lineno, head = rows[0]
    nt, per = _parse(ele_path, lineno, head[:2], (int, int))
    if per != 3:
        raise MeshError(f"{ele_path}:{lineno}: only 3-node triangles are supported")
    if len(rows) - 1 < nt:
        raise MeshError(f"{ele_path}: expected {nt} triangles, found {len(rows) - 1}")
    tris = np.empty((nt, 3), dtype=np.int64)
    for k, (lineno, tok) in enumerate(rows[1 : nt + 1]):
        if len(tok) < 4:
            raise MeshError(f"{ele_path}:{lineno}: expected 'index v1 v2 v3'")
        tris[k] = _parse(ele_path, lineno, tok[1:4], (int, int, int))
        if np.any(tris[k] < base) or np.any(tris[k] >= nv + base):
            raise MeshError(f"{ele_path}:{lineno}: vertex index out of range")
    tris -= base

    p = pts[tris]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    mesh = Mesh(pts, tris, MeshPattern.IMPORTED)
    mesh.validate()
    return mesh


def write_mesh(mesh: Mesh, stem) -> None:
    """Write ``stem.node`` and ``stem.ele`` (1-based, boundary markers set)."""
    stem = Path(stem)
    marker = mesh.is_boundary_vertex.astype(int)
    with open(stem.with_suffix(".node"), "w") as fh:
        fh.write(f"{mesh.n_vertices} 2 0 1\n")
        for k, ((x, y), b) in enumerate(zip(mesh.vertices, marker), 1):
            fh.write(f"{k} {float(x)!r} {float(y)!r} {b}\n")
    with open(stem.with_suffix(".ele"), "w") as fh:
        fh.write(f"{mesh.n_triangles} 3 0\n")
        for k, (a, b, c) in enumerate(mesh.triangles + 1, 1):
            fh.write(f"{k} {a} {b} {c}\n")
