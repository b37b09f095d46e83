import numpy as np
import pytest
import scipy.sparse as sp

from grfem.sparse import (
    InconsistentConstraintError,
    ResidualError,
    SaddlePointError,
    add,
    csr,
    dedup_constraints,
    independent_rows,
    matvec,
    solve_saddle,
    spgemm,
    transpose,
    triple_product,
)


def _random_sparse(rng, m, n, density=0.3):
    a = rng.standard_normal((m, n)) * (rng.random((m, n)) < density)
    return csr(sp.csr_array(a)), a


def test_spgemm_dense_oracle(rng):
    for _ in range(20):
        a, ad = _random_sparse(rng, 20, 20)
        b, bd = _random_sparse(rng, 20, 20)
        assert np.abs(spgemm(a, b).toarray() - ad @ bd).max() < 1e-12


def test_spgemm_hand_and_identity(rng):
    a = sp.csr_array(np.array([[1.0, 2.0], [0.0, 1.0]]))
    b = sp.csr_array(np.array([[1.0, 0.0], [3.0, 1.0]]))
    assert np.array_equal(spgemm(a, b).toarray(), [[7, 2], [3, 1]])
    m, md = _random_sparse(rng, 7, 7)
    assert np.array_equal(spgemm(sp.eye_array(7, format="csr"), m).toarray(), md)
    with pytest.raises(ValueError):
        spgemm(a, sp.eye_array(3, format="csr"))


def test_canonical_form(rng):
    a = sp.csr_array((np.array([1.0, 2.0, 3.0]), np.array([1, 0, 1]), np.array([0, 3, 3])), shape=(2, 2))
    c = csr(a)
    assert c.has_sorted_indices and c.has_canonical_format
    assert np.array_equal(c.toarray(), [[2, 4], [0, 0]])


def test_transpose_add_matvec(rng):
    a, ad = _random_sparse(rng, 6, 9)
    assert np.array_equal(transpose(transpose(a)).toarray(), ad)
    assert np.array_equal(add(a, a).toarray(), 2 * ad)
    x = rng.standard_normal(9)
    assert np.allclose(matvec(a, x), ad @ x)
    assert np.array_equal(matvec(sp.eye_array(9, format="csr"), x), x)
    with pytest.raises(ValueError):
        matvec(a, np.ones(4))


def test_triple_product_symmetric(rng):
    h, hd = _random_sparse(rng, 15, 10)
    s, sd = _random_sparse(rng, 15, 15)
    s = csr(s + s.T)
    k = triple_product(h, s)
    assert abs(k - k.T).max() == 0
    assert np.allclose(k.toarray(), hd.T @ s.toarray() @ hd)


def test_dedup_drops_repeats_up_to_sign():
    c = sp.csr_array(np.array([[1.0, 2.0], [1.0, 2.0], [-1.0, -2.0], [0.0, 1.0]]))
    g = np.array([1.0, 1.0, -1.0, 0.0])
    cc, gg, kept = dedup_constraints(c, g)
    assert list(kept) == [0, 3]
    assert cc.shape == (2, 2)


def test_dedup_inconsistent():
    c = sp.csr_array(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(InconsistentConstraintError):
        dedup_constraints(c, np.array([0.0, 1.0]), ["row a", "row b"])


def test_independent_rows():
    c = sp.csr_array(np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 1.0, 0.01], [0, 0, 1.0]]))
    kept, ratio = independent_rows(c, tol=0.1)
    assert list(kept) == [0, 1, 3]
    kept, _ = independent_rows(c, order=[3, 2, 1, 0], tol=0.1)
    assert list(kept) == [1, 2, 3]


def test_saddle_hand_solve():
    k = sp.csr_array(np.eye(2))
    c = sp.csr_array(np.array([[1.0, 0.0]]))
    u, lam, info = solve_saddle(k, c, np.array([1.0, 1.0]), np.array([0.0]))
    assert np.allclose(u, [0, 1], atol=1e-14)
    assert np.allclose(lam, [1], atol=1e-14)
    assert info.kkt_residual < 1e-12


def test_saddle_feasible_optimum(rng):
    w = rng.standard_normal(6)
    c = sp.csr_array(rng.standard_normal((2, 6)))
    u, lam, _ = solve_saddle(sp.eye_array(6, format="csr"), c, w, c @ w)
    assert np.allclose(u, w, atol=1e-12)
    assert np.abs(lam).max() < 1e-12


def test_saddle_dense_oracle(rng):
    for _ in range(5):
        b = rng.standard_normal((20, 20))
        k = b @ b.T + 20 * np.eye(20)
        c = rng.standard_normal((5, 20))
        f, g = rng.standard_normal(20), rng.standard_normal(5)
        u, lam, info = solve_saddle(sp.csr_array(k), sp.csr_array(c), f, g)
        kkt = np.block([[k, c.T], [c, np.zeros((5, 5))]])
        ref = np.linalg.solve(kkt, np.concatenate([f, g]))
        assert np.allclose(np.concatenate([u, lam]), ref, rtol=1e-9, atol=1e-10)
        assert info.kkt_residual < 1e-10


def test_saddle_singular_reports_dropped_rows():
    # K has a kernel that the constraint does not remove
    k = sp.csr_array(np.diag([1.0, 0.0, 1.0]))
    c = sp.csr_array(np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(SaddlePointError) as err:
        solve_saddle(k, c, np.ones(3), np.zeros(1), dropped_rows=["row q (dependent)"])
    if not isinstance(err.value, ResidualError):
        assert "row q" in str(err.value)


def test_saddle_shape_check():
    with pytest.raises(ValueError):
        solve_saddle(sp.eye_array(3, format="csr"), sp.csr_array((1, 2)), np.ones(3), np.zeros(1))
