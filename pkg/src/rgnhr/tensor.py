"""Dense tensor kernels.

Tensors are plain :class:`numpy.ndarray` objects in C order, so the last
index runs fastest.  With this layout ``vectorize(a ⊗ b ⊗ c)`` is exactly
``np.kron(np.kron(a, b), c)``, and the blocks of the factor-matrix Jacobian
line up with Kronecker products written left to right.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def as_tensor(T) -> np.ndarray:
    T = np.ascontiguousarray(T, dtype=float)
    if T.ndim < 1 or 0 in T.shape:
        raise ValueError(f"a tensor needs d >= 1 and positive dimensions, got shape {T.shape}")
    return T


def vectorize(T) -> np.ndarray:
    return np.ascontiguousarray(T, dtype=float).reshape(-1)


def unvectorize(v, shape: Sequence[int]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.size != int(np.prod(shape)):
        raise ValueError(f"cannot reshape vector of length {v.size} to {tuple(shape)}")
    return v.reshape(tuple(shape))


def frobenius_norm(T) -> float:
    return float(np.linalg.norm(vectorize(T)))


def _check_mode(T: np.ndarray, mode: int) -> None:
    if not 0 <= mode < T.ndim:
        raise ValueError(f"mode {mode} out of range for an order-{T.ndim} tensor")


def flatten(T, mode: int) -> np.ndarray:
    """Mode-``mode`` flattening (0-based), of size ``n_mode x prod(others)``.

    Columns follow the same last-index-fastest order as :func:`vectorize`
    applied to the tensor with ``mode`` removed.
    """
    T = np.asarray(T, dtype=float)
    _check_mode(T, mode)
    return np.moveaxis(T, mode, 0).reshape(T.shape[mode], -1)


def fold(M, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`flatten`."""
    shape = tuple(shape)
    rest = shape[:mode] + shape[mode + 1:]
    return np.moveaxis(np.asarray(M, dtype=float).reshape((shape[mode],) + rest), 0, mode)


def mode_multiply(T, M, mode: int) -> np.ndarray:
    """Return ``T x_mode M``, i.e. ``flatten(result, mode) == M @ flatten(T, mode)``."""
    T = np.asarray(T, dtype=float)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    _check_mode(T, mode)
    if M.shape[1] != T.shape[mode]:
        raise ValueError(
            f"matrix with {M.shape[1]} columns cannot act on mode {mode} of size {T.shape[mode]}"
        )
    return np.moveaxis(np.tensordot(M, T, axes=(1, mode)), 0, mode)


def multilinear_multiply(T, matrices: Sequence) -> np.ndarray:
    """``(M_1, ..., M_d) . T``; entries that are ``None`` leave the mode untouched."""
    T = np.asarray(T, dtype=float)
    if len(matrices) != T.ndim:
        raise ValueError("need one matrix per mode")
    for k, M in enumerate(matrices):
        if M is not None:
            T = mode_multiply(T, M, k)
    return T


def outer(vectors: Sequence) -> np.ndarray:
    """Rank-1 tensor ``a_1 ⊗ ... ⊗ a_d``."""
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float))
    return out


def khatri_rao(*matrices) -> np.ndarray:
    """Columnwise Khatri-Rao product; column ``i`` is ``vectorize(a_i^(1) ⊗ ... ⊗ a_i^(d))``."""
    if len(matrices) == 1 and not isinstance(matrices[0], np.ndarray):
        matrices = tuple(matrices[0])
    mats = [np.atleast_2d(np.asarray(A, dtype=float)) for A in matrices]
    r = mats[0].shape[1]
    if any(A.shape[1] != r for A in mats):
        raise ValueError("all matrices need the same number of columns")
    out = mats[0]
    for A in mats[1:]:
        out = (out[:, None, :] * A[None, :, :]).reshape(-1, r)
    return out


def fix_signs(U: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each column is positive."""
    U = np.array(U, dtype=float, copy=True)
    if U.size == 0:
        return U
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def dominant_left_singular_vectors(M, rank: int) -> np.ndarray:
    # ties between singular values keep LAPACK's ordering; asking for more
    # vectors than the flattening has columns pads with an orthonormal completion
    U, _, _ = np.linalg.svd(M, full_matrices=rank > min(M.shape))
    return fix_signs(U[:, :rank])


@dataclass(frozen=True)
class TuckerDecomposition:
    """Orthogonal Tucker decomposition ``(Q_1, ..., Q_d) . core``."""

    core: np.ndarray
    factors: tuple

    @property
    def shape(self) -> tuple:
        return tuple(Q.shape[0] for Q in self.factors)

    @property
    def ranks(self) -> tuple:
        return self.core.shape

    def expand(self) -> np.ndarray:
        return multilinear_multiply(self.core, list(self.factors))


def st_hosvd(T, ranks: Sequence[int], order: Sequence[int] | None = None) -> TuckerDecomposition:
    """Sequentially truncated HOSVD.

    Modes are processed in ``order`` (0-based, default ``0, ..., d-1``).  At
    each step the ``ranks[k]`` dominant left singular vectors of the current,
    already partially truncated, flattening are kept and the tensor is
    contracted with them before moving to the next mode.
    """
    T = as_tensor(T)
    d = T.ndim
    ranks = tuple(int(x) for x in ranks)
    if len(ranks) != d:
        raise ValueError(f"need {d} ranks, got {len(ranks)}")
    for k, (rk, nk) in enumerate(zip(ranks, T.shape)):
        if not 1 <= rk <= nk:
            raise ValueError(f"rank {rk} for mode {k} must lie in [1, {nk}]")
    order = tuple(range(d)) if order is None else tuple(order)
    if sorted(order) != list(range(d)):
        raise ValueError(f"{order} is not a permutation of the modes")

    core = T
    factors: list = [None] * d
    for k in order:
        U = dominant_left_singular_vectors(flatten(core, k), ranks[k])
        factors[k] = U
        core = mode_multiply(core, U.T, k)
    return TuckerDecomposition(core=core, factors=tuple(factors))


def tucker_compress_then_expand_factors(core_factors: Sequence, tucker_factors: Sequence) -> list:
    """Map factor matrices of a CPD of a Tucker core back to the full tensor.

    If ``S = [[M_1, ..., M_d]]`` and ``B = (Q_1, ..., Q_d) . S`` then
    ``B = [[Q_1 M_1, ..., Q_d M_d]]``.
    """
    if len(core_factors) != len(tucker_factors):
        raise ValueError("need as many core factors as Tucker factors")
    out = []
    for M, Q in zip(core_factors, tucker_factors):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[1] != M.shape[0]:
            raise ValueError(f"Tucker factor {Q.shape} does not match core factor {M.shape}")
        out.append(Q @ M)
    return out
