"""Command-line convergence studies.

Example::

    python -m grfem --example 1 --pattern regular --levels 4 --format markdown

Exit codes: 0 success, 2 invalid arguments, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .convergence import PATTERNS, format_report, run_convergence
from .mesh import MeshError
from .recovery import RecoveryError
from .sparse import InconsistentConstraintError, SaddlePointError

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_NUMERICAL", "EXIT_IO"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

# homogeneous data of Example 1 only vanish on the unit square boundary
_SQUARE_ONLY = {1: ("regular", "chevron", "crisscross", "unionjack", "delaunay-file")}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="grfem",
        description="Convergence study for -Laplace^3 u = f with recovery-based linear elements.",
    )
    p.add_argument("--example", type=int, choices=(1, 2, 3, 4), required=True)
    p.add_argument(
        "--pattern",
        choices=PATTERNS,
        help="mesh family (default: the example's own domain)",
    )
    p.add_argument("--levels", type=int, default=4, help="number of refinement levels (>= 2)")
    p.add_argument("--recovery", choices=("wa", "spr", "ppr"), default="ppr")
    p.add_argument("--mesh", type=Path, help=".node/.ele stem for --pattern delaunay-file")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--out", type=Path, help="output file (default: standard output)")
    p.add_argument(
        "--dump-matrices",
        action="store_true",
        help="write K and C of every level as Matrix Market files next to --out",
    )
    p.add_argument("--quiet", action="store_true", help="no per-level progress on stderr")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return p


def _check(args, parser):
    if args.levels < 2:
        parser.error(f"--levels must be at least 2, got {args.levels}")
    pattern = args.pattern
    if pattern == "delaunay-file" and args.mesh is None:
        parser.error("--pattern delaunay-file requires --mesh FILE")
    if args.mesh is not None and pattern not in (None, "delaunay-file"):
        parser.error("--mesh is only used with --pattern delaunay-file")
    if args.mesh is not None and pattern is None:
        args.pattern = "delaunay-file"
    allowed = _SQUARE_ONLY.get(args.example)
    if allowed and args.pattern not in (None,) + allowed:
        parser.error(f"example {args.example} is posed on the unit square, not on {args.pattern}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check(args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    dump_dir = None
    if args.dump_matrices:
        dump_dir = args.out.parent if args.out is not None else Path.cwd()

    def progress(level):
        if not args.quiet:
            e = level.errors
            print(
                f"dof {level.dof}: De {e.De:.2e} D3e {e.D3e:.2e} "
                f"kkt {level.kkt_residual:.1e} ({level.seconds:.1f}s)",
                file=sys.stderr,
                flush=True,
            )

    try:
        with np.errstate(all="ignore"):
            report = run_convergence(
                args.example,
                args.pattern,
                args.levels,
                args.recovery,
                mesh_file=args.mesh,
                dump_dir=dump_dir,
                progress=progress,
            )
        text = format_report(report, args.format)
        if args.out is None:
            sys.stdout.write(text)
        else:
            args.out.write_text(text)
    except (MeshError, OSError) as exc:
        print(f"grfem: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SaddlePointError, RecoveryError, InconsistentConstraintError, np.linalg.LinAlgError) as exc:
        print(f"grfem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"grfem: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
