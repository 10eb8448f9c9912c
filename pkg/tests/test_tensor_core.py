import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risce.tensor_core import (
    hadamard,
    khatri_rao,
    kronecker,
    mode_n_fold,
    mode_n_unfold,
    n_mode_product,
    parafac3_reconstruct,
    parafac4_reconstruct,
    pseudo_inverse,
    svd,
)

from conftest import crandn

dims3 = st.tuples(*[st.integers(1, 4)] * 3)
dims4 = st.tuples(*[st.integers(1, 4)] * 4)
seeds = st.integers(0, 2**32 - 1)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- Khatri-Rao / Kronecker / Hadamard ----------------------------------------


def test_khatri_rao_identity_selects_columns():
    out = khatri_rao(np.eye(2), np.array([[1, 2], [3, 4]]))
    np.testing.assert_array_equal(out[:, 0], [1, 3, 0, 0])
    np.testing.assert_array_equal(out[:, 1], [0, 0, 2, 4])


def test_khatri_rao_row_vectors():
    np.testing.assert_array_equal(khatri_rao([[1, 2]], [[3, 4]]), [[3, 8]])


def test_khatri_rao_single_column_is_kron(rng):
    A, B = crandn(rng, 3, 1), crandn(rng, 4, 1)
    np.testing.assert_allclose(khatri_rao(A, B), np.kron(A, B))


def test_khatri_rao_column_mismatch():
    with pytest.raises(ValueError, match="column"):
        khatri_rao(np.ones((2, 2)), np.ones((2, 3)))


def test_khatri_rao_chains_left_to_right(rng):
    A, B, C = crandn(rng, 2, 3), crandn(rng, 3, 3), crandn(rng, 4, 3)
    np.testing.assert_allclose(khatri_rao(A, B, C), khatri_rao(khatri_rao(A, B), C))
    for q in range(3):
        np.testing.assert_allclose(khatri_rao(A, B, C)[:, q], np.kron(np.kron(A[:, q], B[:, q]), C[:, q]))


@settings(max_examples=50, deadline=None)
@given(I=st.integers(1, 5), J=st.integers(1, 5), Q=st.integers(1, 5), seed=seeds)
def test_khatri_rao_vec_identity(I, J, Q, seed):
    # vec(A diag(c) B^T) = (B ⋄ A) c
    rng = np.random.default_rng(seed)
    A, B, c = crandn(rng, I, Q), crandn(rng, J, Q), crandn(rng, Q)
    lhs = (A @ np.diag(c) @ B.T).reshape(-1, order="F")
    assert rel_err(khatri_rao(B, A) @ c, lhs) < 1e-12


def test_kronecker_examples(rng):
    B = crandn(rng, 2, 3)
    np.testing.assert_array_equal(kronecker(np.eye(1), B), B)
    np.testing.assert_array_equal(kronecker([[2]], [[1, 1]]), [[2, 2]])
    a, b = crandn(rng, 2), crandn(rng, 3)
    brute = np.array([a[i] * b[j] for i in range(2) for j in range(3)])
    np.testing.assert_allclose(kronecker(a, b), brute, rtol=1e-15)


@settings(max_examples=30, deadline=None)
@given(sizes=st.tuples(*[st.integers(1, 4)] * 3), seed=seeds)
def test_kronecker_outer_identity(sizes, seed):
    # a ⊗ b ⊗ c = vec(c ∘ b ∘ a)
    rng = np.random.default_rng(seed)
    a, b, c = (crandn(rng, s) for s in sizes)
    outer = np.einsum("i,j,k->ijk", c, b, a)
    assert rel_err(kronecker(kronecker(a, b), c), outer.reshape(-1, order="F")) < 1e-12


def test_hadamard_examples(rng):
    a = crandn(rng, 5)
    np.testing.assert_array_equal(hadamard(a, np.ones(5)), a)
    np.testing.assert_array_equal(hadamard([1, 1j], [1j, 1j]), [1j, -1])
    with pytest.raises(ValueError):
        hadamard(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        hadamard(np.ones((3, 1)), np.ones(3))


# -- unfolding ----------------------------------------------------------------


def test_unfold_order3_layout(rng):
    T = crandn(rng, 2, 3, 4)
    np.testing.assert_array_equal(mode_n_unfold(T, 1), np.hstack([T[:, :, k] for k in range(4)]))
    np.testing.assert_array_equal(mode_n_unfold(T, 2), np.hstack([T[:, :, k].T for k in range(4)]))


def test_unfold_rank_one(rng):
    g, h, s = crandn(rng, 2), crandn(rng, 3), crandn(rng, 4)
    T = np.einsum("l,m,k->lmk", g, h, s)
    expected = g[:, None] @ khatri_rao(s, h).T
    np.testing.assert_allclose(mode_n_unfold(T, 1), expected, rtol=1e-13)
    np.testing.assert_allclose(mode_n_fold(expected, 1, T.shape), T, rtol=1e-13)


def test_unfold_mode2_brute_force(rng):
    L, M, K, N = 2, 3, 4, 3
    G, H, C = crandn(rng, L, N), crandn(rng, M, N), crandn(rng, K, N)
    T = np.zeros((L, M, K), complex)
    for l, m, k, n in itertools.product(range(L), range(M), range(K), range(N)):
        T[l, m, k] += G[l, n] * H[m, n] * C[k, n]
    assert rel_err(mode_n_unfold(parafac3_reconstruct(G, H, C), 2), H @ khatri_rao(C, G).T) < 1e-12
    assert rel_err(mode_n_unfold(T, 2), H @ khatri_rao(C, G).T) < 1e-12


@settings(max_examples=40, deadline=None)
@given(dims=st.one_of(dims3, dims4), seed=seeds)
def test_fold_round_trip_is_exact(dims, seed):
    T = crandn(np.random.default_rng(seed), *dims)
    for n in range(1, len(dims) + 1):
        np.testing.assert_array_equal(mode_n_fold(mode_n_unfold(T, n), n, dims), T)


def test_fold_zero_and_errors():
    np.testing.assert_array_equal(mode_n_fold(np.zeros((2, 12)), 1, (2, 3, 4)), np.zeros((2, 3, 4)))
    with pytest.raises(ValueError):
        mode_n_fold(np.zeros((2, 11)), 1, (2, 3, 4))
    with pytest.raises(ValueError):
        mode_n_unfold(np.zeros((2, 3, 4)), 4)
    with pytest.raises(ValueError):
        mode_n_unfold(np.zeros((2, 3, 4)), 0)
    with pytest.raises(ValueError):
        mode_n_unfold(np.zeros((2, 3)), 1)


# -- mode products ------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(dims=st.one_of(dims3, dims4), rows=st.integers(1, 4), seed=seeds)
def test_mode_product_unfolding(dims, rows, seed):
    rng = np.random.default_rng(seed)
    T = crandn(rng, *dims)
    for n in range(1, len(dims) + 1):
        B = crandn(rng, rows, dims[n - 1])
        out = n_mode_product(T, B, n)
        assert rel_err(mode_n_unfold(out, n), B @ mode_n_unfold(T, n)) < 1e-12


def test_mode_product_identity_and_commute(rng):
    T = crandn(rng, 2, 3, 4)
    np.testing.assert_allclose(n_mode_product(T, np.eye(3), 2), T)
    A, B = crandn(rng, 5, 2), crandn(rng, 2, 3)
    lhs = n_mode_product(n_mode_product(T, A, 1), B, 2)
    rhs = n_mode_product(n_mode_product(T, B, 2), A, 1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
    with pytest.raises(ValueError):
        n_mode_product(T, crandn(rng, 2, 5), 1)


def test_identity_tensor_mode_products_match_slices(rng):
    L, M, K, N = 2, 3, 4, 3
    G, H, Sbar = crandn(rng, L, N), crandn(rng, M, N), crandn(rng, K, N)
    I3 = np.zeros((N, N, N), complex)
    I3[np.arange(N), np.arange(N), np.arange(N)] = 1
    T = n_mode_product(n_mode_product(n_mode_product(I3, G, 1), H, 2), Sbar, 3)
    for k in range(K):
        brute = sum(Sbar[k, n] * np.outer(G[:, n], H[:, n]) for n in range(N))
        np.testing.assert_allclose(T[:, :, k], brute, rtol=1e-12)


# -- SVD / pseudo-inverse -----------------------------------------------------


def test_pinv_examples(rng):
    np.testing.assert_allclose(pseudo_inverse(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(pseudo_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    Q, _ = np.linalg.qr(crandn(rng, 6, 3))
    np.testing.assert_allclose(pseudo_inverse(Q), Q.conj().T, atol=1e-14)
    np.testing.assert_array_equal(pseudo_inverse(np.zeros((3, 2))), np.zeros((2, 3)))


def _moore_penrose_errors(A):
    X = pseudo_inverse(A)
    scale = max(np.linalg.norm(A), 1.0)
    return [
        rel_err(A @ X @ A, A),
        rel_err(X @ A @ X, X),
        np.linalg.norm((A @ X).conj().T - A @ X) / scale,
        np.linalg.norm((X @ A).conj().T - X @ A) / scale,
    ]


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 8), n=st.integers(1, 8), rank=st.integers(1, 8), seed=seeds)
def test_moore_penrose_identities(m, n, rank, seed):
    rng = np.random.default_rng(seed)
    r = min(rank, m, n)
    A = crandn(rng, m, r) @ crandn(rng, r, n)  # full or deficient rank
    assert max(_moore_penrose_errors(A)) < 1e-10


def test_svd_examples(rng):
    _, s, _ = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(s, [3, 1])
    u, v = crandn(rng, 4), crandn(rng, 3)
    _, s, _ = svd(np.outer(u, v.conj()))
    assert s[0] == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v))
    assert np.all(s[1:] < 1e-12 * s[0])
    A = crandn(rng, 8, 5)
    U, s, Vh = svd(A)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    assert rel_err(U @ np.diag(s) @ Vh, A) < 1e-12


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        pseudo_inverse(np.zeros((0, 3)))


# -- PARAFAC reconstruction ---------------------------------------------------


def test_parafac3_special_cases(rng):
    G, H = crandn(rng, 2, 1), crandn(rng, 3, 1)
    c = crandn(rng, 4, 1)
    T = parafac3_reconstruct(G, H, c)
    for k in range(4):
        np.testing.assert_allclose(T[:, :, k], c[k, 0] * G @ H.T)
        assert np.linalg.matrix_rank(T[:, :, k]) == 1
    G, H = crandn(rng, 2, 3), crandn(rng, 3, 3)
    T = parafac3_reconstruct(G, H, np.ones((4, 3)))
    for k in range(4):
        np.testing.assert_allclose(T[:, :, k], G @ H.T)
    with pytest.raises(ValueError):
        parafac3_reconstruct(G, H, np.ones((4, 2)))


@settings(max_examples=30, deadline=None)
@given(dims=dims4, N=st.integers(1, 4), seed=seeds)
def test_parafac_brute_force(dims, N, seed):
    rng = np.random.default_rng(seed)
    L, M, K, P = dims
    G, H, S, E = crandn(rng, L, N), crandn(rng, M, N), crandn(rng, K, N), crandn(rng, P, N)
    T3 = np.zeros((L, M, K), complex)
    T4 = np.zeros((L, M, K, P), complex)
    for l, m, k in itertools.product(range(L), range(M), range(K)):
        T3[l, m, k] = sum(G[l, n] * H[m, n] * S[k, n] for n in range(N))
        for p in range(P):
            T4[l, m, k, p] = sum(G[l, n] * H[m, n] * S[k, n] * E[p, n] for n in range(N))
    assert rel_err(parafac3_reconstruct(G, H, S), T3) < 1e-12
    assert rel_err(parafac4_reconstruct(G, H, S, E), T4) < 1e-12


def test_parafac4_reduces_to_parafac3(rng):
    G, H, S = crandn(rng, 2, 3), crandn(rng, 3, 3), crandn(rng, 4, 3)
    T4 = parafac4_reconstruct(G, H, S, np.ones((3, 3)))
    for p in range(3):
        np.testing.assert_allclose(T4[..., p], parafac3_reconstruct(G, H, S))
    e = crandn(rng, 3)
    np.testing.assert_allclose(parafac4_reconstruct(G, H, S, e[None, :])[..., 0],
                               parafac3_reconstruct(G, H, S * e[None, :]), rtol=1e-14)


def test_order4_unfoldings(rng):
    L, M, K, P, N = 2, 3, 4, 2, 3
    G, H, S, E = crandn(rng, L, N), crandn(rng, M, N), crandn(rng, K, N), crandn(rng, P, N)
    T = parafac4_reconstruct(G, H, S, E)
    assert rel_err(mode_n_unfold(T, 1), G @ khatri_rao(E, S, H).T) < 1e-12
    assert rel_err(mode_n_unfold(T, 2), H @ khatri_rao(E, S, G).T) < 1e-12
    assert rel_err(mode_n_unfold(T, 3), S @ khatri_rao(E, H, G).T) < 1e-12
    assert rel_err(mode_n_unfold(T, 4), E @ khatri_rao(S, H, G).T) < 1e-12
