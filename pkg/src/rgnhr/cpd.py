"""CPD points on the product of Segre manifolds and the least-squares model.

Tangent coordinates are ordered term-major: all ``Σ + 1`` coordinates of
term 1 come first, then those of term 2, and so on.  Inside a term the
blocks follow the modes, ``(x_1 ∈ R^{n_1}, x_2 ∈ R^{n_2-1}, ...)``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

from .segre import (
    DegenerateRetractionError,
    RankOnePoint,
    make_rank_one,
    retract,
    tangent_basis_apply,
    tangent_dimension,
)
from .tensor import khatri_rao

# Upper bound on the number of entries of an explicitly assembled T_p.
EXPLICIT_SIZE_LIMIT = 50_000_000


class DegenerateCoefficientsError(np.linalg.LinAlgError):
    """The optimal-coefficient problem is singular or produced a zero coefficient."""

    def __init__(self, message: str, coefficients=None):
        super().__init__(message)
        self.coefficients = coefficients


class CpdPoint:
    """A tuple of ``r`` rank-1 tensors over a common shape."""

    __slots__ = ("terms",)

    def __init__(self, terms: Sequence[RankOnePoint]):
        terms = tuple(terms)
        if not terms:
            raise ValueError("a CPD needs at least one term")
        shape = terms[0].shape
        if any(t.shape != shape for t in terms):
            raise ValueError("all rank-1 terms must share the same shape")
        self.terms = terms

    @classmethod
    def from_factors(cls, factors: Sequence) -> "CpdPoint":
        """Build from factor matrices ``A_k`` (``n_k x r``); term ``i`` uses column ``i``."""
        mats = [np.atleast_2d(np.asarray(A, dtype=float)) for A in factors]
        r = mats[0].shape[1]
        if any(A.shape[1] != r for A in mats):
            raise ValueError("factor matrices need the same number of columns")
        return cls([make_rank_one([A[:, i] for A in mats]) for i in range(r)])

    @property
    def rank(self) -> int:
        return len(self.terms)

    @property
    def shape(self) -> tuple:
        return self.terms[0].shape

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def term_dim(self) -> int:
        return tangent_dimension(self.shape)

    @property
    def dim(self) -> int:
        """``r (Σ + 1)``, the dimension of the product manifold."""
        return self.rank * self.term_dim

    def factors(self) -> list:
        """Factor matrices of the norm-balanced representatives."""
        return [np.column_stack([t.vectors[k] for t in self.terms]) for k in range(self.order)]

    def unit_factors(self) -> list:
        return [np.column_stack([t.units[k] for t in self.terms]) for k in range(self.order)]

    def scales(self) -> np.ndarray:
        return np.array([t.scale for t in self.terms])

    def rescaled(self, coefficients) -> "CpdPoint":
        coefficients = np.asarray(coefficients, dtype=float)
        terms = []
        for t, x in zip(self.terms, coefficients):
            vecs = list(t.vectors)
            vecs[0] = x * vecs[0]
            terms.append(make_rank_one(vecs))
        return CpdPoint(terms)

    def __len__(self) -> int:
        return self.rank

    def __repr__(self) -> str:
        return f"CpdPoint(shape={self.shape}, rank={self.rank})"


def is_strictly_subgeneric(shape: Sequence[int], r: int) -> bool:
    return r * tangent_dimension(shape) < int(np.prod(shape))


def evaluate(p: CpdPoint) -> np.ndarray:
    """Sum of the rank-1 terms."""
    out = np.zeros(p.shape)
    for t in p.terms:
        out += t.tensor()
    return out


def _check_shape(p: CpdPoint, B) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape != p.shape:
        raise ValueError(f"tensor shape {B.shape} does not match CPD shape {p.shape}")
    return B


def residual(p: CpdPoint, B) -> np.ndarray:
    return evaluate(p) - _check_shape(p, B)


def objective(p: CpdPoint, B) -> float:
    """``½ ||Φ(p) - B||_F²``."""
    R = residual(p, B)
    return 0.5 * float(np.vdot(R, R))


def mttkrp_all(T, factors: Sequence) -> list:
    """CP gradient kernel: ``flatten(T, k) @ khatri_rao(A_m, m != k)`` for every mode.

    Uses left-to-right partial contractions shared across modes, finishing
    each mode with right-to-left contractions; the Khatri-Rao products are
    never formed.
    """
    T = np.asarray(T, dtype=float)
    d = T.ndim
    mats = [np.asarray(A, dtype=float) for A in factors]
    r = mats[0].shape[1]

    def contract_last(X, A):
        # X has shape (r, ..., n); contract its last mode columnwise with A (n x r)
        return np.einsum("i...j,ji->i...", X, A)

    out = []
    # mode 0 comes entirely from the right
    X = np.moveaxis(np.tensordot(T, mats[-1], axes=(d - 1, 0)), -1, 0) if d > 1 else None
    if d == 1:
        out.append(np.repeat(T[:, None], r, axis=1))
        return out
    for m in range(d - 2, 0, -1):
        X = contract_last(X, mats[m])
    out.append(X.T)

    # left partials: L holds modes k..d-1 after contracting modes < k
    L = np.tensordot(mats[0].T, T, axes=(1, 0))
    for k in range(1, d):
        X = L
        for m in range(d - 1, k, -1):
            X = contract_last(X, mats[m])
        out.append(X.T)
        if k < d - 1:
            L = np.einsum("ij...,ji->i...", L, mats[k])
    return out


def gradient(p: CpdPoint, B) -> np.ndarray:
    """Riemannian gradient ``T_p^T vec(Φ(p) - B)`` in term-major coordinates.

    The CP gradient ``J^T r`` is taken with the unit factor matrices and then
    projected onto the tangent bases ``U_k`` (``D^T (J^T r)``).
    """
    R = residual(p, B)
    blocks = mttkrp_all(R, p.unit_factors())
    g = np.empty(p.dim)
    pos = 0
    for i, t in enumerate(p.terms):
        for k, Mk in enumerate(blocks):
            col = Mk[:, i]
            part = col if k == 0 else t.bases[k].T @ col
            g[pos:pos + part.size] = part
            pos += part.size
    return g


def _offsets(shape: Sequence[int]) -> np.ndarray:
    sizes = [shape[0]] + [n - 1 for n in shape[1:]]
    return np.concatenate([[0], np.cumsum(sizes)])


def gn_hessian(p: CpdPoint) -> np.ndarray:
    """Gauss-Newton Hessian ``H_p = T_p^T T_p`` from Gram/Hadamard structure.

    With unit factor matrices ``Â_m`` and ``G_m = Â_m^T Â_m`` the block of
    ``J^T J`` coupling term ``i`` in mode ``k`` and term ``j`` in mode ``l`` is

    * ``k == l``: ``(∏_{m≠k} G_m[i, j]) I_{n_k}``
    * ``k != l``: ``(∏_{m≠k,l} G_m[i, j]) â_{j,k} â_{i,l}^T``

    and ``H_p`` applies ``U_{i,k}^T`` on the left and ``U_{j,l}`` on the right.
    """
    d = p.order
    r = p.rank
    shape = p.shape
    A = p.unit_factors()
    G = np.stack([Ak.T @ Ak for Ak in A])  # (d, r, r)
    U = [[t.basis_blocks()[k] for t in p.terms] for k in range(d)]
    # W[k][i] = U_{i,k}^T Â_k, columns indexed by j
    W = [np.stack([U[k][i].T @ A[k] for i in range(r)]) for k in range(d)]
    off = _offsets(shape)
    m = p.term_dim
    H = np.zeros((r, m, r, m))
    for k in range(d):
        sk = slice(off[k], off[k + 1])
        P = np.prod(np.delete(G, k, axis=0), axis=0) if d > 1 else np.ones((r, r))
        # U_{i,k}^T U_{j,k}
        UU = np.einsum("iau,jav->iujv", np.stack(U[k]), np.stack(U[k]))
        H[:, sk, :, sk] = P[:, None, :, None] * UU
        for l in range(k + 1, d):
            sl = slice(off[l], off[l + 1])
            P = np.prod(np.delete(G, [k, l], axis=0), axis=0) if d > 2 else np.ones((r, r))
            # (U_{i,k}^T â_{j,k}) (U_{j,l}^T â_{i,l})^T
            blk = P[:, None, :, None] * np.einsum("iuj,jwi->iujw", W[k], W[l])
            H[:, sk, :, sl] = blk
            H[:, sl, :, sk] = blk.transpose(2, 3, 0, 1)
    return H.reshape(r * m, r * m)


def assemble_T_explicit(p: CpdPoint, size_limit: int = EXPLICIT_SIZE_LIMIT) -> np.ndarray:
    """Explicit ``Π x r(Σ+1)`` matrix ``T_p = [T_{p_1} ... T_{p_r}]``."""
    n_rows = int(np.prod(p.shape))
    if n_rows * p.dim > size_limit:
        raise MemoryError(
            f"explicit T_p would have {n_rows * p.dim} entries (limit {size_limit})"
        )
    return np.hstack([t.tangent_matrix() for t in p.terms])


def tangent_apply(p: CpdPoint, x) -> np.ndarray:
    """``T_p x`` as a tensor, summing the per-term tangent tensors."""
    out = np.zeros(p.shape)
    for t, xi in zip(p.terms, split_terms(p, x)):
        out += tangent_basis_apply(t, xi)
    return out


def split_terms(p: CpdPoint, x) -> list:
    x = np.asarray(x, dtype=float)
    if x.size != p.dim:
        raise ValueError(f"expected {p.dim} coordinates, got {x.size}")
    return np.split(x, p.rank)


def retract_point(p: CpdPoint, x) -> CpdPoint:
    """Product ST-HOSVD retraction, one rank-1 term at a time."""
    return CpdPoint([retract(t, xi) for t, xi in zip(p.terms, split_terms(p, x))])


def optimal_coefficients(p: CpdPoint, B, pivot_tol: float = 1e-12):
    """Least-squares coefficients ``x`` minimising ``||Σ x_i p_i - B||``.

    Solves ``((Â_1^T Â_1) * ... * (Â_d^T Â_d)) y = (Â_1 ⊙ ... ⊙ Â_d)^T vec(B)``
    by Cholesky with the unit factor matrices, then converts back to the
    scale of the input terms.  Returns ``(x, rescaled_point)``.

    Raises
    ------
    DegenerateCoefficientsError
        If a Cholesky pivot falls below ``pivot_tol`` times the largest
        diagonal entry, or if some coefficient is exactly zero.
    """
    B = _check_shape(p, B)
    A = p.unit_factors()
    gram = np.ones((p.rank, p.rank))
    for Ak in A:
        gram *= Ak.T @ Ak
    # (Â_1 ⊙ ... ⊙ Â_d)^T vec(B) as r simultaneous contractions
    X = np.tensordot(B, A[-1], axes=(B.ndim - 1, 0))
    for Ak in reversed(A[:-1]):
        X = np.einsum("...ji,ji->...i", X, Ak)
    rhs = X.reshape(-1)
    L = _guarded_cholesky(gram, pivot_tol)
    if L is None:
        raise DegenerateCoefficientsError("rank-1 terms are numerically linearly dependent")
    y = scipy.linalg.cho_solve((L, True), rhs)
    x = y / p.scales()
    if np.any(y == 0) or not np.all(np.isfinite(y)):
        raise DegenerateCoefficientsError("optimal coefficient vanished", coefficients=x)
    return x, p.rescaled(x)


def _guarded_cholesky(M: np.ndarray, pivot_tol: float):
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    if np.min(np.diag(L)) ** 2 < pivot_tol * np.max(np.diag(M)):
        return None
    return L


__all__ = [
    "CpdPoint",
    "DegenerateCoefficientsError",
    "DegenerateRetractionError",
    "assemble_T_explicit",
    "evaluate",
    "gn_hessian",
    "gradient",
    "is_strictly_subgeneric",
    "khatri_rao",
    "mttkrp_all",
    "objective",
    "optimal_coefficients",
    "residual",
    "retract_point",
    "split_terms",
    "tangent_apply",
]
