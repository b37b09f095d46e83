"""Convergence studies: run a manufactured problem on a mesh sequence and
tabulate the errors with observed orders with respect to the DoF count.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .fem import ErrorNorms, error_norms
from .mesh import (
    MeshPattern,
    generate_disk,
    generate_lshape,
    generate_uniform,
    load_mesh,
    refine_regular,
)
from .problems import Example
from .solver import solve_bvp

__all__ = [
    "ERROR_NAMES",
    "PATTERNS",
    "LevelResult",
    "ConvergenceReport",
    "estimate_order",
    "level_meshes",
    "run_convergence",
    "format_report",
    "write_report",
    "read_report",
]

log = logging.getLogger(__name__)

ERROR_NAMES = ("De", "D1e", "D1re", "D2e", "D3e")
HEADER = ["Dof"] + [c for name in ERROR_NAMES for c in (name, "order")]
PATTERNS = ("regular", "chevron", "crisscross", "unionjack", "delaunay-file", "disk", "lshape")

# coarsest mesh of each family: cells per side (square), cells across the
# width (L-shape), rings (disk)
SQUARE_BASE = 32
LSHAPE_BASE = 16
DISK_BASE = 5


def estimate_order(e_coarse, e_fine, dof_coarse, dof_fine) -> float:
    """Observed order ``log(e_coarse / e_fine) / log(dof_fine / dof_coarse)``."""
    if min(e_coarse, e_fine) <= 0 or min(dof_coarse, dof_fine) <= 0:
        raise ValueError("errors and DoF counts must be positive")
    if dof_fine <= dof_coarse:
        raise ValueError(f"DoF must increase, got {dof_coarse} -> {dof_fine}")
    return float(np.log(e_coarse / e_fine) / np.log(dof_fine / dof_coarse))


@dataclass(frozen=True)
class LevelResult:
    """Errors and solver statistics of one level."""

    dof: int
    errors: ErrorNorms
    energy_norm: float = float("nan")  # ||D G^2 u_h||_0
    f_norm: float = float("nan")
    kkt_residual: float = float("nan")
    constraint_residual: float = float("nan")  # max |Cu - g| over enforced rows
    dropped_residual: float = float("nan")  # same over rows left out as dependent
    n_constraints: int = 0
    n_dropped: int = 0
    seconds: float = 0.0


@dataclass
class ConvergenceReport:
    """Per-level errors ordered by strictly increasing DoF."""

    levels: list
    example: Optional[int] = None
    pattern: str = ""
    method: str = "ppr"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dof = [lv.dof for lv in self.levels]
        if any(b <= a for a, b in zip(dof, dof[1:])):
            raise ValueError(f"DoF must be strictly increasing across levels, got {dof}")

    @property
    def dofs(self) -> np.ndarray:
        return np.array([lv.dof for lv in self.levels], dtype=np.int64)

    @property
    def errors(self) -> np.ndarray:
        """(L, 5) array in the order of :data:`ERROR_NAMES`."""
        return np.array([lv.errors.as_tuple() for lv in self.levels], dtype=float).reshape(-1, 5)

    @property
    def orders(self) -> np.ndarray:
        """(L, 5) observed orders; the first row is NaN."""
        return _orders(self.dofs, self.errors)

    @property
    def stability_ratios(self) -> np.ndarray:
        """``||D G^2 u_h|| / ||f||`` per level; NaN where ``f`` vanishes."""
        energy = np.array([lv.energy_norm for lv in self.levels], dtype=float)
        f = np.array([lv.f_norm for lv in self.levels], dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(f > 0, energy / np.where(f > 0, f, 1.0), np.nan)


def _orders(dofs, errors):
    out = np.full(errors.shape, np.nan)
    for i in range(1, len(dofs)):
        for j in range(errors.shape[1]):
            out[i, j] = estimate_order(errors[i - 1, j], errors[i, j], dofs[i - 1], dofs[i])
    return out


# ---------------------------------------------------------------------------
# mesh sequences


def _pattern(pattern) -> str:
    if isinstance(pattern, MeshPattern):
        pattern = pattern.value
    if pattern == "imported":
        pattern = "delaunay-file"
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {', '.join(PATTERNS)}")
    return pattern


def level_meshes(pattern, levels: Union[int, Sequence[int]], mesh_file=None) -> list:
    """Mesh sequence for a convergence study.

    An integer ``levels`` gives the default schedule: square patterns with
    ``32 * 2^k`` cells per side, the L-shape with ``16 * 2^k`` cells across,
    the disk from 5 rings and the file mesh as read, each followed by regular
    refinement (boundary midpoints projected onto the circle for the disk).
    A sequence gives explicit sizes instead: cells per side, cells across,
    ring counts, or numbers of refinements of the file mesh.
    """
    pattern = _pattern(pattern)
    if pattern == "delaunay-file" and mesh_file is None:
        raise ValueError("pattern delaunay-file needs a mesh file")
    if isinstance(levels, (int, np.integer)):
        if levels < 1:
            raise ValueError(f"levels must be >= 1, got {levels}")
        if pattern in ("disk", "delaunay-file"):
            first = generate_disk(DISK_BASE) if pattern == "disk" else load_mesh(mesh_file)
            meshes = [first]
            for _ in range(int(levels) - 1):
                meshes.append(refine_regular(meshes[-1], project_boundary=pattern == "disk"))
            return meshes
        base = LSHAPE_BASE if pattern == "lshape" else SQUARE_BASE
        sizes = [base * 2**k for k in range(int(levels))]
    else:
        sizes = [int(s) for s in levels]
        if not sizes:
            raise ValueError("no levels given")
    if pattern == "lshape":
        return [generate_lshape(n) for n in sizes]
    if pattern == "disk":
        return [generate_disk(n) for n in sizes]
    if pattern == "delaunay-file":
        base_mesh = load_mesh(mesh_file)
        out = []
        for r in sizes:
            m = base_mesh
            for _ in range(r):
                m = refine_regular(m)
            out.append(m)
        return out
    return [generate_uniform(pattern, n) for n in sizes]


def run_convergence(
    example,
    pattern=None,
    levels: Union[int, Sequence[int]] = 4,
    method="ppr",
    mesh_file=None,
    dump_dir=None,
    progress: Optional[Callable[[LevelResult], None]] = None,
) -> ConvergenceReport:
    """Solve ``example`` on each level and collect the error norms.

    Parameters
    ----------
    example : int or Example
    pattern : str, optional
        Mesh family; defaults to the example's own domain.
    levels : int or sequence of int
        Number of levels of the default schedule, or explicit sizes (see
        :func:`level_meshes`); at least 2.  DoF must increase strictly.
    method : {"wa", "spr", "ppr"}
    mesh_file : path, optional
        ``.node``/``.ele`` stem for the ``delaunay-file`` pattern.
    dump_dir : path, optional
        Write ``K`` and ``C`` of each level in Matrix Market format here.
    progress : callable, optional
        Called with each :class:`LevelResult` as it completes.
    """
    example = Example(int(example))
    pattern = _pattern(pattern or example.default_pattern)
    spec = example.spec
    n_levels = levels if isinstance(levels, (int, np.integer)) else len(levels)
    if n_levels < 2:
        raise ValueError(f"a convergence study needs at least 2 levels, got {n_levels}")
    meshes = level_meshes(pattern, levels, mesh_file)
    dof = [m.n_vertices for m in meshes]
    if any(b <= a for a, b in zip(dof, dof[1:])):
        raise ValueError(f"DoF must be strictly increasing across levels, got {dof}")
    results = []
    while meshes:
        mesh = meshes.pop(0)
        t0 = time.perf_counter()
        u, diag = solve_bvp(mesh, spec, method, dump_dir=dump_dir)
        err = error_norms(mesh, u, diag.system.recovery, spec)
        res = LevelResult(
            dof=mesh.n_vertices,
            errors=err,
            energy_norm=diag.energy_norm,
            f_norm=diag.f_norm,
            kkt_residual=diag.solve.kkt_residual,
            constraint_residual=diag.solve.constraint_residual,
            dropped_residual=diag.dropped_residual,
            n_constraints=diag.n_constraints,
            n_dropped=diag.n_dropped,
            seconds=time.perf_counter() - t0,
        )
        del u, diag, mesh
        log.info("level dof=%d errors=%s (%.1fs)", res.dof, err.as_tuple(), res.seconds)
        results.append(res)
        if progress is not None:
            progress(res)
    return ConvergenceReport(results, int(example), pattern, str(method))


# ---------------------------------------------------------------------------
# tables


def _table(report: ConvergenceReport):
    """Rows of cells.  Errors are printed with 3 significant digits and the
    orders are computed from the printed values, so a table can be checked
    by hand from its own entries."""
    shown = np.array([[float(f"{e:.2e}") for e in row] for row in report.errors]).reshape(-1, 5)
    orders = _orders(report.dofs, shown)
    rows = []
    for i, dof in enumerate(report.dofs):
        row = [str(int(dof))]
        for j in range(5):
            row.append(f"{report.errors[i, j]:.2e}")
            row.append("--" if i == 0 else f"{orders[i, j]:.2f}")
        rows.append(row)
    return rows


def format_report(report: ConvergenceReport, fmt: str = "csv") -> str:
    """Render the table as ``csv`` or ``markdown`` text."""
    rows = _table(report)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HEADER)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(HEADER) + " |", "|" + "---|" * len(HEADER)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}; choose csv or markdown")


def write_report(report: ConvergenceReport, fmt: str = "csv", path=None) -> Path:
    """Write the table to ``path`` (created or overwritten) and return it."""
    text = format_report(report, fmt)
    path = Path(path)
    path.write_text(text)
    return path


def read_report(path):
    """Parse a CSV table written by :func:`write_report`.

    Returns ``(dofs, errors, orders)``; undefined orders are NaN.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HEADER:
        raise ValueError(f"{path}: not a convergence table (header {rows[0] if rows else None})")
    body = rows[1:]
    dofs = np.array([int(r[0]) for r in body], dtype=np.int64)
    errors = np.array([[float(r[1 + 2 * j]) for j in range(5)] for r in body]).reshape(-1, 5)
    orders = np.array(
        [[np.nan if r[2 + 2 * j] == "--" else float(r[2 + 2 * j]) for j in range(5)] for r in body]
    ).reshape(-1, 5)
    return dofs, errors, orders
