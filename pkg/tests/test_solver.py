import numpy as np
import pytest
import scipy.sparse as sp

from grfem.fem import BoundaryData, ProblemSpec, assemble_stiffness, error_norms
from grfem.mesh import generate_disk, generate_lshape, generate_uniform, refine_regular
from grfem.problems import example1, example2
from grfem.recovery import build_ppr, third_derivative_field
from grfem.solver import (
    KINDS,
    assemble_system,
    build_constraints,
    select_constraints,
    solve_bvp,
)


def _system(mesh):
    op = build_ppr(mesh)
    return op, assemble_system(mesh, op, assemble_stiffness(mesh))


def test_energy_matches_elementwise_quadrature(rng):
    m = generate_uniform("chevron", 8)
    op, k = _system(m)
    h = op.hessian()
    for _ in range(10):
        v = rng.standard_normal(m.n_vertices)
        nodal = np.empty((m.n_vertices, 2, 2))
        for j in range(2):
            for l in range(2):
                nodal[:, j, l] = h[j][l] @ v
        t = third_derivative_field(m, nodal)
        direct = (m.areas * (t**2).sum(axis=(1, 2, 3))).sum()
        assert abs(v @ (k @ v) - direct) <= 1e-10 * direct


def test_k_symmetric_psd_and_linear_kernel(rng):
    m = generate_uniform("unionjack", 6)
    _, k = _system(m)
    assert abs(k - k.T).max() == 0
    for _ in range(10):
        x = rng.standard_normal(m.n_vertices)
        assert x @ (k @ x) >= -1e-10 * (x @ x)
    lam = np.linalg.eigvalsh(k.toarray())
    assert lam.min() >= -1e-10 * lam.max()
    x, y = m.vertices.T
    v = 1 + 2 * x - 3 * y
    assert abs(v @ (k @ v)) < 1e-10 * np.abs(k).sum() * (v @ v)


def test_dimension_mismatch():
    m = generate_uniform("regular", 3)
    op = build_ppr(m)
    with pytest.raises(ValueError):
        assemble_system(m, op, sp.eye_array(5, format="csr"))


@pytest.mark.parametrize("n", [2, 4, 6])
def test_constraint_count_unit_square(n):
    m = generate_uniform("regular", n)
    op = build_ppr(m)
    cons = build_constraints(m, op, example1())
    nb = len(m.boundary_vertices)
    assert cons.n_rows == nb + 2 * nb + nb + 4
    assert np.all(cons.g == 0)


def test_corner_rows():
    m = generate_uniform("regular", 4)
    op = build_ppr(m)
    cons = build_constraints(m, op, example1())
    corner = int(np.nonzero((m.vertices == [0.0, 0.0]).all(axis=1))[0][0])
    mine = [i for i, lab in enumerate(cons.labels) if f"vertex {corner} " in lab]
    kinds = sorted(cons.kinds[i] for i in mine)
    assert kinds.count("value") == 1 and kinds.count("hessian") == 2
    assert kinds.count("normal") + kinds.count("tangential") == 2
    grad_rows = sp.vstack([cons.c[[i]] for i in mine if cons.kinds[i] in ("normal", "tangential")])
    target = sp.vstack([op.gx[[corner]], op.gy[[corner]]]).toarray()
    # same span as {Gx[p], Gy[p]}
    both = np.vstack([grad_rows.toarray(), target])
    assert np.linalg.matrix_rank(both, tol=1e-10) == 2


def test_smooth_vertex_normal_and_tangent_span_gradient():
    m = generate_uniform("chevron", 4)
    op = build_ppr(m)
    cons = build_constraints(m, op, example1())
    v = int(np.nonzero((np.abs(m.vertices - [0.5, 0.0]) < 1e-12).all(axis=1))[0][0])
    rows = [i for i, lab in enumerate(cons.labels) if f"vertex {v} " in lab and cons.kinds[i] in ("normal", "tangential")]
    both = np.vstack([cons.c[rows].toarray(), op.gx[[v]].toarray(), op.gy[[v]].toarray()])
    assert len(rows) == 2 and np.linalg.matrix_rank(both, tol=1e-10) == 2


def test_selection_keeps_values_and_orders_kinds():
    m = generate_uniform("regular", 8)
    cons = build_constraints(m, build_ppr(m), example1())
    sel = select_constraints(cons)
    assert sel.kinds.count("value") == cons.kinds.count("value")
    assert set(sel.kinds) <= set(KINDS)
    assert sel.n_rows + len(sel.dropped) - len(cons.dropped) == cons.n_rows
    assert all("dependent" in d or "duplicate" in d for d in sel.dropped)
    c = sel.c.toarray()
    assert np.linalg.matrix_rank(c) == sel.n_rows


def test_from_exact_needs_callbacks():
    with pytest.raises(ValueError):
        ProblemSpec(f=lambda x, y: x, bc=BoundaryData.FROM_EXACT)


def _zero_spec():
    return ProblemSpec(f=lambda x, y: np.zeros(np.shape(x)))


@pytest.mark.parametrize(
    "mesh",
    [
        generate_uniform("regular", 8),
        generate_uniform("chevron", 8),
        generate_uniform("crisscross", 6),
        generate_uniform("unionjack", 8),
        generate_lshape(8),
        refine_regular(generate_disk(3), project_boundary=True),
    ],
    ids=["regular", "chevron", "crisscross", "unionjack", "lshape", "disk"],
)
def test_zero_data_gives_zero(mesh):
    u, diag = solve_bvp(mesh, _zero_spec())
    assert np.abs(u).max() < 1e-10
    assert diag.solve.kkt_residual < 1e-8


def test_nonhomogeneous_boundary_values_reproduced():
    spec = example2()
    m = generate_uniform("chevron", 16)
    u, diag = solve_bvp(m, spec)
    b = m.boundary_vertices
    x, y = m.vertices[b].T
    assert np.abs(u[b] - spec.u(x, y)).max() < 1e-10
    assert diag.solve.constraint_residual < 1e-10


def test_energy_identity_and_determinism():
    spec = example2()
    m = generate_uniform("regular", 12)
    u, diag = solve_bvp(m, spec)
    sysm = diag.system
    c, g = sysm.constraints.c, sysm.constraints.g
    lhs = u @ (sysm.k @ u)
    rhs = sysm.f @ u - sysm.lam @ (c @ u)
    assert abs(lhs - rhs) <= 1e-8 * abs(lhs)
    u2, _ = solve_bvp(m, spec)
    assert np.array_equal(u, u2)


def test_positive_on_constraint_kernel(rng):
    m = generate_uniform("chevron", 8)
    op, k = _system(m)
    cons = select_constraints(build_constraints(m, op, example1()))
    c = cons.c.toarray()
    for _ in range(10):
        x = rng.standard_normal(m.n_vertices)
        z = x - c.T @ np.linalg.lstsq(c @ c.T, c @ x, rcond=None)[0]
        if np.linalg.norm(z) > 1e-12:
            assert z @ (k @ z) > 0


def test_example1_first_table_row():
    spec = example1()
    m = generate_uniform("regular", 32)
    assert m.n_vertices == 1089
    u, diag = solve_bvp(m, spec)
    e = error_norms(m, u, diag.system.recovery, spec)
    for got, ref in ((e.De, 5.61e-06), (e.D1re, 2.57e-05), (e.D3e, 4.46e-03)):
        assert ref / 3 < got < 3 * ref


def test_methods_selectable():
    spec = example1()
    m = generate_uniform("regular", 8)
    for method in ("wa", "spr", "ppr"):
        u, diag = solve_bvp(m, spec, method)
        assert diag.system.recovery.method.value == method
        assert np.isfinite(u).all()
