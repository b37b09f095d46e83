"""Compressed-row matrix kernels and the constrained (saddle-point) solve.

Matrices are :class:`scipy.sparse.csr_array` instances kept in canonical form:
sorted column indices, no duplicates, entries below 1e-300 in magnitude
dropped.  Every function here returns canonical matrices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.io
from scipy.linalg import solve_triangular
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:
    from cvxopt import cholmod as _cholmod
    from cvxopt import matrix as _cvx_matrix
    from cvxopt import spmatrix as _cvx_spmatrix
except ImportError:  # pragma: no cover - exercised only without cvxopt
    _cholmod = None

__all__ = [
    "SparseMatrix",
    "SaddlePointError",
    "SingularSystemError",
    "ResidualError",
    "InconsistentConstraintError",
    "SolveInfo",
    "csr",
    "spgemm",
    "transpose",
    "add",
    "matvec",
    "triple_product",
    "dedup_constraints",
    "independent_rows",
    "solve_saddle",
    "dump_matrix",
]

log = logging.getLogger(__name__)

SparseMatrix = sp.csr_array

PRUNE = 1e-300
KKT_RTOL = 1e-8
CONSTRAINT_TOL = 1e-10
AUGMENT = 1e3  # rho in K + rho C^T C, scaled units
CG_RTOL = 1e-13
CG_MAXITER = 1000


class SaddlePointError(RuntimeError):
    """Numerical failure in the constrained solve."""


class SingularSystemError(SaddlePointError):
    pass


class ResidualError(SaddlePointError):
    pass


class InconsistentConstraintError(ValueError):
    pass


def csr(a, shape=None) -> sp.csr_array:
    """Return ``a`` as a canonical CSR array (a copy when normalization is needed)."""
    m = sp.csr_array(a, shape=shape, dtype=float)
    m.sum_duplicates()
    m.sort_indices()
    if m.nnz and np.any(np.abs(m.data) < PRUNE):
        m.data[np.abs(m.data) < PRUNE] = 0.0
        m.eliminate_zeros()
    m.indices = m.indices.astype(np.int64, copy=False)
    m.indptr = m.indptr.astype(np.int64, copy=False)
    return m


def spgemm(a, b) -> sp.csr_array:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"spgemm: shapes {a.shape} and {b.shape} do not conform")
    return csr(csr(a) @ csr(b))


def transpose(a) -> sp.csr_array:
    return csr(csr(a).T)


def add(a, b) -> sp.csr_array:
    if a.shape != b.shape:
        raise ValueError(f"add: shapes {a.shape} and {b.shape} differ")
    return csr(csr(a) + csr(b))


def matvec(a, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"matvec: shape {a.shape} cannot act on length {x.shape[0]}")
    return csr(a) @ x


def triple_product(h, s, h2=None) -> sp.csr_array:
    """``H^T S H2`` (``H2`` defaults to ``H``), symmetrized when ``H2 is H``."""
    h = csr(h)
    h2 = h if h2 is None else csr(h2)
    if s.shape != (h.shape[0], h2.shape[0]):
        raise ValueError(f"triple_product: S has shape {s.shape}, expected {(h.shape[0], h2.shape[0])}")
    out = csr(h.T @ (csr(s) @ h2))
    if h2 is h:
        out = csr(0.5 * (out + out.T))
    return out


def _canonical_rows(c, g):
    """Flip rows so that each row's first stored entry is positive."""
    c = csr(c).copy()
    g = np.asarray(g, dtype=float).copy()
    starts = c.indptr[:-1]
    nonempty = c.indptr[1:] > starts
    sign = np.ones(c.shape[0])
    sign[nonempty] = np.sign(c.data[starts[nonempty]])
    c.data *= np.repeat(sign, np.diff(c.indptr))
    return c, g * sign


def dedup_constraints(c, g, labels=None, rtol=1e-12):
    """Drop constraint rows that repeat an earlier row.

    Rows are compared after fixing their sign (first stored entry positive);
    two rows match when they share a sparsity pattern and their values agree to
    ``rtol`` relative to the row's largest entry.  A matching pair with
    different right-hand sides is inconsistent.

    Parameters
    ----------
    c : sparse (m, n)
    g : (m,) right-hand side
    labels : sequence of str, optional
        Human-readable origin of each row, used in error messages.

    Returns
    -------
    c_kept, g_kept, kept : sparse, ndarray, int ndarray of kept row indices
    """
    c, g = _canonical_rows(c, g)
    m = c.shape[0]
    keep = np.ones(m, dtype=bool)
    buckets: dict[tuple, list[int]] = {}
    for r in range(m):
        lo, hi = c.indptr[r], c.indptr[r + 1]
        cols = c.indices[lo:hi]
        vals = c.data[lo:hi]
        scale = np.abs(vals).max() if hi > lo else 0.0
        key = (hi - lo, cols.tobytes())
        for q in buckets.get(key, ()):
            other = c.data[c.indptr[q] : c.indptr[q + 1]]
            if np.all(np.abs(other - vals) <= rtol * scale):
                gtol = rtol * max(1.0, abs(g[q]), abs(g[r])) * max(1.0, scale)
                if abs(g[q] - g[r]) > max(gtol, CONSTRAINT_TOL * max(1.0, abs(g[q]))):
                    who = labels[r] if labels is not None else f"row {r}"
                    raise InconsistentConstraintError(
                        f"duplicate constraint at {who} has conflicting data "
                        f"{g[q]!r} vs {g[r]!r}"
                    )
                keep[r] = False
                break
        else:
            buckets.setdefault(key, []).append(r)
    kept = np.nonzero(keep)[0]
    return csr(c[kept]), g[kept], kept


SELECTION_BLOCK = 256


def independent_rows(c, order=None, tol=0.1, block=SELECTION_BLOCK):
    """Greedy selection of numerically independent rows.

    Rows are visited in ``order``; a row is kept when its distance to the span
    of the rows kept before it exceeds ``tol`` times its norm.  The distances
    are the pivots of a Cholesky factorization of the Gram matrix ``C C^T`` in
    visiting order that skips rejected rows.  Rows are processed in blocks: the
    Gram block of the candidates is reduced against all rows kept so far with a
    sparse factorization, then scanned row by row with a dense factor.

    Returns
    -------
    kept : int ndarray, sorted
    ratios : ndarray
        Relative distance of every row to the span of the rows kept before it.
    """
    c = csr(c)
    m = c.shape[0]
    order = np.arange(m) if order is None else np.asarray(order, dtype=np.int64)
    gram = csr(c @ c.T)
    norms2 = gram.diagonal()
    ratios = np.zeros(m)
    kept: list[int] = []
    for start in range(0, len(order), block):
        cand = order[start : start + block]
        s = gram[cand][:, cand].toarray()
        if kept:
            g_kc = gram[kept][:, cand].toarray()
            solve, _, _ = _factor_spd(csr(gram[kept][:, kept]))
            s -= g_kc.T @ solve(g_kc)
        # in-order Cholesky of the reduced block, skipping rejected rows
        lb = np.zeros((len(cand), len(cand)))
        sel: list[int] = []
        for i, row in enumerate(cand):
            if norms2[row] == 0.0:
                continue
            y = solve_triangular(lb[np.ix_(sel, sel)], s[sel, i], lower=True) if sel else np.zeros(0)
            piv = s[i, i] - y @ y
            ratios[row] = np.sqrt(max(piv, 0.0) / norms2[row])
            if ratios[row] > tol:
                k = len(sel)
                sel.append(i)
                lb[sel[k], sel[:k]] = y
                lb[sel[k], sel[k]] = np.sqrt(piv)
                kept.append(int(row))
    return np.array(sorted(kept), dtype=np.int64), ratios


@dataclass
class SolveInfo:
    """Diagnostics of one saddle-point solve."""

    n: int
    m: int
    factorization: str  # "cholmod" or "superlu"
    nnz_factor: Optional[int]  # stored factor entries (SuperLU only)
    kkt_residual: float  # normwise backward error of the KKT system
    constraint_residual: float
    refinement_steps: int
    dropped_rows: list = field(default_factory=list)


def _inf_norm(a):
    a = csr(a)
    if not a.nnz:
        return 0.0
    return float(np.bincount(
        np.repeat(np.arange(a.shape[0]), np.diff(a.indptr)), np.abs(a.data), minlength=a.shape[0]
    ).max())


def _row_norms(a):
    return np.sqrt(np.bincount(
        np.repeat(np.arange(a.shape[0]), np.diff(a.indptr)), a.data**2, minlength=a.shape[0]
    ))


def _factor_spd(a):
    """Factor a symmetric positive definite matrix.

    Uses the supernodal Cholesky factorization of CHOLMOD when cvxopt is
    installed (about half the memory of LU), otherwise SuperLU with a
    minimum-degree ordering on ``A^T + A`` and diagonal pivots.

    Returns ``(solve, backend, nnz_factor)``.
    """
    n = a.shape[0]
    if _cholmod is not None:
        low = sp.coo_array(sp.tril(a))
        mat = _cvx_spmatrix(
            _cvx_matrix(low.data.astype(float)),
            _cvx_matrix(low.row.astype(np.int64)),
            _cvx_matrix(low.col.astype(np.int64)),
            (n, n),
        )
        factor = _cholmod.symbolic(mat, uplo="L")
        _cholmod.numeric(mat, factor)

        def solve(b):
            x = _cvx_matrix(np.asfortranarray(b, dtype=float))
            _cholmod.solve(factor, x)
            return np.array(x).reshape(np.shape(b))

        return solve, "cholmod", None
    lu = spla.splu(
        sp.csc_array(a),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    return lu.solve, "superlu", int(lu.nnz)


def solve_saddle(k, c, f, g, dropped_rows=(), max_refine=3, rho=AUGMENT):
    """Solve ``[[K, C^T], [C, 0]] [u; lam] = [F; g]``.

    The system is scaled symmetrically first: unknowns by ``diag(K)^-1/2`` and
    constraint rows to unit 2-norm in those units.  In scaled form the
    equivalent augmented system with ``A = K + rho C^T C`` is used; ``A`` is
    symmetric positive definite whenever the constrained problem is well posed,
    so it is factored once by a sparse Cholesky (or symmetric LU) factorization.
    The multipliers solve the Schur
    complement system ``C A^-1 C^T lam = C A^-1 (F + rho C^T g) - g`` by
    conjugate gradients.  Up to ``max_refine`` steps of iterative refinement
    on the full system are taken when the residual tolerance is missed.

    Raises
    ------
    SingularSystemError
        The factorization broke down.  ``dropped_rows`` (labels of rows removed
        before the solve) are reported with the error.
    ResidualError
        The normwise backward error
        ``||Ku + C^T lam - F|| / (||K|| ||u|| + ||C^T|| ||lam|| + ||F||)``
        (infinity norms) is at least 1e-8, or
        ``||Cu - g||_inf >= 1e-10 (1 + ||g||_inf)``, after refinement.
    """
    k = csr(k)
    c = csr(c)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n, m = k.shape[0], c.shape[0]
    if k.shape != (n, n) or c.shape[1] != n or f.shape != (n,) or g.shape != (m,):
        raise ValueError(
            f"solve_saddle: inconsistent shapes K{k.shape} C{c.shape} F{f.shape} g{g.shape}"
        )
    diag = k.diagonal()
    d = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 1.0)
    cd = csr(c @ sp.diags_array(d))
    rn = _row_norms(cd)
    if np.any(rn == 0):
        raise SingularSystemError(f"constraint row {int(np.argmin(rn))} is empty")
    r = 1.0 / rn
    ks = csr(sp.diags_array(d) @ k @ sp.diags_array(d))
    cs = csr(sp.diags_array(r) @ cd)
    a = csr(ks + rho * (cs.T @ cs))

    def fail(why):
        return SingularSystemError(
            f"{why}; rows dropped before the solve: {list(dropped_rows)}"
        )

    try:
        solve, backend, nnz_factor = _factor_spd(a)
    except (RuntimeError, ArithmeticError) as exc:
        raise fail(f"factorization failed ({exc})") from None

    schur = spla.LinearOperator((m, m), matvec=lambda x: cs @ solve(cs.T @ x), dtype=float)

    def kkt_solve(rf, rg):
        h = rf + rho * (cs.T @ rg)
        lam = np.zeros(m)
        if m:
            lam, _ = spla.cg(schur, cs @ solve(h) - rg, rtol=CG_RTOL, maxiter=CG_MAXITER)
        return solve(h - cs.T @ lam), lam

    fs, gs = f * d, g * r

    k_norm, ct_norm = _inf_norm(k), _inf_norm(c.T) if m else 0.0
    f_norm = np.abs(f).max() if n else 0.0

    def residuals(us, ls):
        u, lam = us * d, ls * r
        r1 = np.abs(k @ u + c.T @ lam - f).max() if n else 0.0
        lam_norm = np.abs(lam).max() if m else 0.0
        scale = k_norm * np.abs(u).max() + ct_norm * lam_norm + f_norm
        rel = r1 / scale if scale > 0 else r1
        r2 = np.abs(c @ u - g).max() if m else 0.0
        return rel, r2

    gmax = np.abs(g).max() if m else 0.0
    ctol = CONSTRAINT_TOL * (1 + gmax)
    us, ls = kkt_solve(fs, gs)
    if not (np.all(np.isfinite(us)) and np.all(np.isfinite(ls))):
        raise fail("solve produced non-finite values")
    rel, r2 = residuals(us, ls)
    steps = 0
    while (rel >= KKT_RTOL or r2 >= ctol) and steps < max_refine:
        du, dl = kkt_solve(fs - ks @ us - cs.T @ ls, gs - cs @ us)
        us, ls = us + du, ls + dl
        steps += 1
        rel, r2 = residuals(us, ls)
    if not (np.all(np.isfinite(us)) and np.all(np.isfinite(ls))):
        raise fail("solve produced non-finite values")
    if rel >= KKT_RTOL or r2 >= ctol:
        raise ResidualError(
            f"KKT residual {rel:.3e} (tol {KKT_RTOL:g}), constraint residual "
            f"{r2:.3e} (tol {ctol:.3e})"
        )
    info = SolveInfo(
        n=n,
        m=m,
        factorization=backend,
        nnz_factor=nnz_factor,
        kkt_residual=float(rel),
        constraint_residual=float(r2),
        refinement_steps=steps,
        dropped_rows=list(dropped_rows),
    )
    log.debug("saddle solve: %s", info)
    return us * d, ls * r, info


def dump_matrix(a, path) -> Path:
    """Write ``a`` in MatrixMarket coordinate format."""
    path = Path(path)
    scipy.io.mmwrite(str(path), sp.coo_matrix(a))
    return path
