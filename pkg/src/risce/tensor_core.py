"""Dense complex matrix and tensor primitives.

Unfolding convention: the mode-``n`` fibres become the columns of
``[T]_(n)`` and the remaining modes are laid out in increasing order with the
lowest one varying fastest.  For an ``L x M x K`` tensor this gives
``[T]_(1) = [T[:, :, 0], ..., T[:, :, K-1]]`` and
``[T]_(2) = [T[:, :, 0].T, ..., T[:, :, K-1].T]``, which is exactly the layout
under which ``[T]_(1) = G (C ⋄ H)^T`` holds for a PARAFAC tensor with factors
``G, H, C``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "khatri_rao",
    "kronecker",
    "hadamard",
    "mode_n_unfold",
    "mode_n_fold",
    "n_mode_product",
    "pseudo_inverse",
    "svd",
    "parafac3_reconstruct",
    "parafac4_reconstruct",
]


def _as_matrix(A, name="matrix"):
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if A.size == 0:
        raise ValueError(f"{name} must not be empty, got shape {A.shape}")
    return A


def _as_tensor(T):
    T = np.asarray(T, dtype=complex)
    if T.ndim not in (3, 4):
        raise ValueError(f"only order-3 and order-4 tensors are supported, got order {T.ndim}")
    if T.size == 0:
        raise ValueError("tensor must not be empty")
    return T


def khatri_rao(*matrices):
    """Column-wise Kronecker product.

    ``khatri_rao(A, B)[:, q] == kron(A[:, q], B[:, q])``.  More than two
    arguments chain left to right, so the rightmost factor varies fastest in
    the row index.

    Parameters
    ----------
    *matrices : array_like
        Two or more matrices sharing the same number of columns.

    Returns
    -------
    ndarray of shape ``(prod(rows), Q)``
    """
    if len(matrices) < 2:
        raise ValueError("khatri_rao needs at least two matrices")
    mats = [_as_matrix(m, "khatri_rao operand") for m in matrices]
    Q = mats[0].shape[1]
    for m in mats[1:]:
        if m.shape[1] != Q:
            raise ValueError(
                f"khatri_rao operands need equal column counts, got {[x.shape[1] for x in mats]}"
            )
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, Q)
    return out


def kronecker(A, B):
    """Kronecker product of two matrices (or vectors)."""
    return np.kron(np.asarray(A, dtype=complex), np.asarray(B, dtype=complex))


def hadamard(a, b):
    """Element-wise product; shapes must match exactly (no broadcasting)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def _check_mode(n, order):
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= order:
        raise ValueError(f"mode index must be in 1..{order}, got {n!r}")


def mode_n_unfold(T, n):
    """Mode-``n`` unfolding ``[T]_(n)`` with 1-based ``n``."""
    T = _as_tensor(T)
    _check_mode(n, T.ndim)
    ax = n - 1
    return np.moveaxis(T, ax, 0).reshape(T.shape[ax], -1, order="F")


def mode_n_fold(matrix, n, dims: Sequence[int]):
    """Inverse of :func:`mode_n_unfold`."""
    dims = tuple(int(d) for d in dims)
    if len(dims) not in (3, 4) or any(d < 1 for d in dims):
        raise ValueError(f"invalid tensor dims {dims}")
    _check_mode(n, len(dims))
    matrix = np.asarray(matrix, dtype=complex)
    ax = n - 1
    rest = dims[:ax] + dims[ax + 1:]
    expected = (dims[ax], int(np.prod(rest)))
    if matrix.shape != expected:
        raise ValueError(f"cannot fold matrix of shape {matrix.shape} into mode {n} of {dims}")
    T = matrix.reshape((dims[ax],) + rest, order="F")
    return np.moveaxis(T, 0, ax)


def n_mode_product(T, B, n):
    """Return ``T x_n B``, i.e. the tensor whose mode-``n`` unfolding is ``B [T]_(n)``."""
    T = _as_tensor(T)
    B = _as_matrix(B, "mode-product matrix")
    _check_mode(n, T.ndim)
    if B.shape[1] != T.shape[n - 1]:
        raise ValueError(
            f"mode-{n} product needs {T.shape[n - 1]} columns, got matrix {B.shape}"
        )
    dims = list(T.shape)
    dims[n - 1] = B.shape[0]
    return mode_n_fold(B @ mode_n_unfold(T, n), n, dims)


def svd(A, full_matrices=False):
    """Thin SVD ``A = U @ diag(s) @ Vh`` with ``s`` non-increasing."""
    A = _as_matrix(A)
    return np.linalg.svd(A, full_matrices=full_matrices)


def pseudo_inverse(A):
    """Moore-Penrose pseudo-inverse through the SVD.

    Singular values at or below ``max(rows, cols) * eps * s_max`` are treated
    as zero, so a zero matrix maps to a zero matrix.
    """
    A = _as_matrix(A)
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[::-1], dtype=complex)
    cutoff = max(A.shape) * np.finfo(float).eps * s[0]
    keep = s > cutoff
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (Vh.conj().T * inv_s) @ U.conj().T


def _check_factors(*factors):
    mats = [_as_matrix(f, "factor") for f in factors]
    ranks = {m.shape[1] for m in mats}
    if len(ranks) != 1:
        raise ValueError(f"factor matrices need equal column counts, got {[m.shape[1] for m in mats]}")
    return mats


def parafac3_reconstruct(G, H, C):
    """``L x M x K`` tensor with frontal slices ``G diag(C[k]) H^T``."""
    G, H, C = _check_factors(G, H, C)
    return np.einsum("ln,mn,kn->lmk", G, H, C)


def parafac4_reconstruct(G, H, S, E):
    """``L x M x K x P`` tensor with slices ``G D_p(E) D_k(S) H^T``."""
    G, H, S, E = _check_factors(G, H, S, E)
    return np.einsum("ln,mn,kn,pn->lmkp", G, H, S, E)
