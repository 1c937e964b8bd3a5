import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import subspace_angles

from saddlemap import gallery
from saddlemap.eigen import (
    SubspaceWarning, canonicalize_eigens, canonicalize_matrix, check_index_k, column_combinations, euler_update,
    find_index, give_initial_eigenvectors, gram_schmidt, group_eigenpairs, lobpcg_smallest, power_update,
)
from saddlemap.hessian import HessianOperator
from saddlemap.system import build_from_energy, build_from_force


def sym_op(A):
    A = np.asarray(A, dtype=float)
    return HessianOperator(build_from_force(lambda x: A @ x, A.shape[0], True, symmetry_check=False))


def field_op(J):
    """Operator for dx/dt = J x, supplied through the normalized field G = -J x."""
    J = np.asarray(J, dtype=float)
    return HessianOperator(build_from_force(lambda x: -J @ x, J.shape[0], False, symmetry_check=False))


def orth_err(V):
    return np.abs(V.T @ V - np.eye(V.shape[1])).max()


def test_euler_rotates_toward_unstable_direction():
    # start slightly off the stable axis; the exact stable eigenvector is a fixed point
    op = sym_op(np.diag([-1.0, 2.0]))
    v = np.array([[0.01], [1.0]])
    basis, flag = euler_update(op, np.zeros(2), v / np.linalg.norm(v), gamma=80.0, substeps=200)
    assert abs(abs(basis.V[0, 0]) - 1.0) < 1e-4
    assert flag


def test_euler_fixed_point_at_eigenvector():
    op = sym_op(np.diag([-1.0, 2.0]))
    basis, _ = euler_update(op, np.zeros(2), np.array([[1.0], [0.0]]), 0.4, 1)
    np.testing.assert_allclose(np.abs(basis.V[:, 0]), [1.0, 0.0], atol=1e-10)


def test_nongradient_euler_finds_largest_real_part(rng):
    op = field_op([[1.0, 0.0], [0.0, -1.0]])
    v = gram_schmidt(rng.standard_normal((2, 1)))
    for _ in range(200):
        basis, flag = euler_update(op, np.zeros(2), v, 0.1, 1, is_gradient=False)
        v = basis.V
    np.testing.assert_allclose(np.abs(v[:, 0]), [1.0, 0.0], atol=1e-6)
    assert flag


def test_power_matches_euler_on_symmetric(rng):
    A = np.diag([-2.0, 0.5, 1.5, 3.0])
    Q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    op = sym_op(Q @ A @ Q.T)
    V0 = gram_schmidt(rng.standard_normal((4, 2)))
    Ve, Vp = V0, V0
    for _ in range(400):
        Ve = euler_update(op, np.zeros(4), Ve, 0.1, 1, is_gradient=False)[0].V
        Vp = power_update(op, np.zeros(4), Vp, 0.1, 1)[0].V
    assert np.max(subspace_angles(Ve, Vp)) < 1e-6


def test_power_full_space():
    op = field_op([[0.3, 1.0], [0.0, -2.0]])
    basis, _ = power_update(op, np.zeros(2), np.eye(2), 0.1, 3)
    assert orth_err(basis.V) < 1e-12 and basis.V.shape == (2, 2)


def test_power_complex_pair_flag():
    op = field_op([[0.1, -1.0], [1.0, 0.1]])
    basis, flag = power_update(op, np.zeros(2), np.eye(2), 0.05, 1)
    assert flag
    np.testing.assert_allclose(basis.rayleigh_diag, [-0.1, -0.1], atol=1e-8)


def test_lobpcg_diagonal_examples(rng):
    op = sym_op(np.diag([-3.0, -1.0, 2.0, 5.0]))
    basis, flag = lobpcg_smallest(op, np.zeros(4), gram_schmidt(rng.standard_normal((4, 2))), 20)
    np.testing.assert_allclose(basis.rayleigh_diag, [-3.0, -1.0], atol=1e-8)
    assert flag
    op = sym_op(np.diag([1.0, 2.0, 3.0]))
    basis, flag = lobpcg_smallest(op, np.zeros(3), gram_schmidt(rng.standard_normal((3, 1))), 20)
    assert basis.rayleigh_diag[0] == pytest.approx(1.0, abs=1e-8)
    assert not flag


def test_lobpcg_butterfly_saddle(butterfly_spec, rng):
    x = np.array([0.0, 0.5])  # index-2 stationary point of the butterfly energy
    op = HessianOperator(butterfly_spec)
    basis, flag = lobpcg_smallest(op, x, gram_schmidt(rng.standard_normal((2, 2))), 10)
    dense = np.linalg.eigvalsh(HessianOperator(butterfly_spec, "exact").dense(x))
    np.testing.assert_allclose(np.sort(basis.rayleigh_diag), dense, atol=1e-6)
    assert flag and np.all(dense < 0)


def test_lobpcg_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        lobpcg_smallest(field_op([[0.0, 1.0], [-1.0, 0.0]]), np.zeros(2), np.eye(2)[:, :1])


def test_lobpcg_keeps_invariant_subspace():
    # zero residuals: the block is already an eigenbasis and must be returned as is
    op = sym_op(np.diag([-4.0, -8.0, -12.0]))
    basis, flag = lobpcg_smallest(op, np.zeros(3), np.eye(3)[:, :2], 10)
    assert orth_err(basis.V) < 1e-12 and flag
    np.testing.assert_allclose(basis.rayleigh_diag, [-8.0, -4.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(basis.V), np.eye(3)[:, [1, 0]], atol=1e-12)


def test_check_index_k_cubic():
    op = HessianOperator(gallery.cubic(3).build())
    assert check_index_k(op, np.zeros(3), 3)
    assert not check_index_k(op, np.ones(3), 1)
    assert check_index_k(op, np.ones(3), 0)


def test_find_index_examples():
    op = HessianOperator(gallery.cubic(3).build())
    rep = find_index(op, np.array([0.0, 0.0, 1.0]))
    assert (rep.neg, rep.zero, rep.pos) == (2, 0, 1)
    assert orth_err(rep.neg_vectors) < 1e-10
    flat = HessianOperator(build_from_energy("x1**4", 1))
    rep = find_index(flat, np.zeros(1))
    assert rep.zero == 1 and rep.degenerate
    rot = find_index(field_op([[0.1, -1.0], [1.0, 0.1]]), np.zeros(2))
    assert (rot.neg, rot.zero, rot.pos) == (2, 0, 0)
    assert orth_err(rot.neg_vectors) < 1e-10


def test_find_index_mixed_complex_and_real():
    J = np.array([[0.2, -1.0, 0.0], [1.0, 0.2, 0.0], [0.0, 0.0, -3.0]])
    rep = find_index(field_op(J), np.zeros(3))
    assert (rep.neg, rep.zero, rep.pos) == (2, 0, 1)
    np.testing.assert_allclose(np.abs(rep.neg_vectors[2]), 0.0, atol=1e-12)


def test_give_initial_eigenvectors(rng):
    A = rng.standard_normal((5, 5))
    A = A + A.T
    op = sym_op(A)
    basis = give_initial_eigenvectors(op, np.zeros(5), 2)
    assert orth_err(basis.V) < 1e-10
    ref = np.linalg.eigh(A)[1][:, :2]
    assert np.max(subspace_angles(basis.V, ref)) < 1e-6
    lob, _ = lobpcg_smallest(op, np.zeros(5), gram_schmidt(rng.standard_normal((5, 2))), 100, step_tol=1e-12)
    assert np.max(subspace_angles(basis.V, lob.V)) < 1e-6
    assert give_initial_eigenvectors(op, np.zeros(5), 0).V.shape == (5, 0)


def test_canonical_same_subspace():
    a = np.array([[1.0, 1.0], [1.0, -1.0], [0.0, 0.0]]) / np.sqrt(2)
    b = np.eye(3)[:, :2]
    np.testing.assert_array_equal(canonicalize_matrix(a), canonicalize_matrix(b))


def test_canonical_sign_fix():
    np.testing.assert_array_equal(canonicalize_matrix(np.array([[0.0], [-1.0]])), [[0.0], [1.0]])


def test_canonical_rank_deficient():
    with pytest.raises(ValueError):
        canonicalize_matrix(np.array([[1.0, 2.0], [1.0, 2.0]]))


def test_canonical_blocks_and_grouping():
    vals = np.array([-2.0, -2.0 + 1e-7, 1.0])
    vecs = np.eye(3)
    blocks = group_eigenpairs(vals, vecs, 1e-5)
    assert [b.shape[1] for _, b in blocks] == [2, 1]
    out = canonicalize_eigens(blocks)
    assert [b.shape for _, b in out] == [(3, 2), (3, 1)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_canonical_invariance_and_idempotence(seed, m):
    rng = np.random.default_rng(seed)
    d = 6
    block = np.linalg.qr(rng.standard_normal((d, m)))[0]
    Q = np.linalg.qr(rng.standard_normal((m, m)))[0]
    c1 = canonicalize_matrix(block)
    c2 = canonicalize_matrix(block @ Q)
    np.testing.assert_allclose(c1, c2, atol=1e-10)
    assert np.max(subspace_angles(c1, block)) <= 1e-10
    np.testing.assert_array_equal(canonicalize_matrix(c1), canonicalize_matrix(canonicalize_matrix(c1)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["euler", "power", "lobpcg"]))
def test_updates_keep_orthonormality(seed, method):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((6, 6))
    A = A + A.T
    op = sym_op(A)
    V = gram_schmidt(rng.standard_normal((6, 3)))
    for _ in range(5):
        if method == "euler":
            V = euler_update(op, np.zeros(6), V, 0.05, 2)[0].V
        elif method == "power":
            V = power_update(op, np.zeros(6), V, 0.05, 2)[0].V
        else:
            V = lobpcg_smallest(op, np.zeros(6), V, 3)[0].V
        assert orth_err(V) <= 1e-8


def test_gram_schmidt_replaces_collapsed_column():
    A = np.array([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    with pytest.warns(SubspaceWarning):
        Q = gram_schmidt(A, np.random.default_rng(0))
    assert orth_err(Q) < 1e-12


def test_column_combinations():
    assert column_combinations(3, 2) == [(0, 1), (0, 2), (1, 2)]
    assert column_combinations(3, 2, "min") == [(0, 1)]


def test_index_counts_consistent(rng):
    for _ in range(10):
        A = rng.standard_normal((5, 5))
        A = A + A.T
        rep = find_index(sym_op(A), np.zeros(5))
        assert rep.neg + rep.zero + rep.pos == 5
        for k in range(6):
            assert check_index_k(sym_op(A), np.zeros(5), k) == (rep.neg + rep.zero >= k)
