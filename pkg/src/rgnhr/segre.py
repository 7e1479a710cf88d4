"""Rank-1 tensors as points on the Segre manifold.

A :class:`RankOnePoint` stores a norm-balanced tuple ``(a_1, ..., a_d)`` with
``a_1 ⊗ ... ⊗ a_d`` the represented tensor, the unit directions
``â_k = a_k / ||a_k||`` and orthonormal bases ``U_k`` of the tangent space of
the unit sphere at ``â_k`` for ``k >= 2``.  Tangent vectors are handled in the
coordinates of the orthonormal basis

    T_p = [I ⊗ â_2 ⊗ ... ⊗ â_d,  â_1 ⊗ U_2 ⊗ ... ⊗ â_d,  ...,  â_1 ⊗ ... ⊗ U_d]

whose ``Σ + 1 = n_1 + Σ_{k>=2} (n_k - 1)`` columns are unit tensors.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

from .tensor import outer, st_hosvd


class DegenerateRetractionError(ArithmeticError):
    """The truncated tensor produced by the retraction is zero."""


def _tangent_basis(a_hat: np.ndarray) -> np.ndarray:
    n = a_hat.size
    if n == 1:
        return np.zeros((1, 0))
    P = np.eye(n) - np.outer(a_hat, a_hat)
    Q, _, _ = scipy.linalg.qr(P, pivoting=True)
    return Q[:, : n - 1]


class RankOnePoint:
    """Norm-balanced representative of a nonzero rank-1 tensor.

    Build instances with :func:`make_rank_one`; the constructor assumes its
    inputs are already balanced.
    """

    __slots__ = ("vectors", "units", "norm", "bases")

    def __init__(self, vectors: Sequence[np.ndarray]):
        self.vectors = tuple(np.asarray(v, dtype=float) for v in vectors)
        norms = [np.linalg.norm(v) for v in self.vectors]
        self.norm = float(norms[0])
        self.units = tuple(v / nv for v, nv in zip(self.vectors, norms))
        self.bases = (None,) + tuple(_tangent_basis(u) for u in self.units[1:])

    @property
    def shape(self) -> tuple:
        return tuple(v.size for v in self.vectors)

    @property
    def order(self) -> int:
        return len(self.vectors)

    @property
    def scale(self) -> float:
        """Frobenius norm of the represented tensor (``||a_1||^d``)."""
        return float(np.prod([np.linalg.norm(v) for v in self.vectors]))

    @property
    def tangent_dim(self) -> int:
        return tangent_dimension(self.shape)

    def tensor(self) -> np.ndarray:
        return outer(self.vectors)

    def basis_blocks(self) -> list:
        """``U_k`` for every mode, with ``U_1 = I``."""
        return [np.eye(self.shape[0])] + list(self.bases[1:])

    def tangent_matrix(self) -> np.ndarray:
        """Explicit ``Π x (Σ+1)`` matrix ``T_p``; meant for tests and small problems."""
        cols = []
        for k, Uk in enumerate(self.basis_blocks()):
            factors = list(self.units)
            factors[k] = Uk
            block = factors[0] if factors[0].ndim == 2 else factors[0][:, None]
            for f in factors[1:]:
                block = np.kron(block, f if f.ndim == 2 else f[:, None])
            cols.append(block)
        return np.hstack(cols)

    def __repr__(self) -> str:
        return f"RankOnePoint(shape={self.shape}, scale={self.scale:.6g})"


def tangent_dimension(shape: Sequence[int]) -> int:
    return 1 + sum(int(n) - 1 for n in shape)


def make_rank_one(vectors: Sequence) -> RankOnePoint:
    """Norm-balanced representative of ``v_1 ⊗ ... ⊗ v_d``.

    All vectors are rescaled to the geometric mean of their norms.  For
    ``k >= 2`` the sign is fixed so the largest-magnitude entry is positive;
    the resulting sign of the tensor is carried by the first vector.
    """
    vecs = [np.array(v, dtype=float).reshape(-1) for v in vectors]
    if not vecs:
        raise ValueError("need at least one vector")
    norms = np.array([np.linalg.norm(v) for v in vecs])
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise ValueError("rank-1 factors must be nonzero and finite")
    common = float(np.exp(np.mean(np.log(norms))))
    sign = 1.0
    out = []
    for k, (v, nv) in enumerate(zip(vecs, norms)):
        v = v * (common / nv)
        if k > 0 and v[np.argmax(np.abs(v))] < 0:
            v = -v
            sign = -sign
        out.append(v)
    out[0] = sign * out[0]
    return RankOnePoint(out)


def split_coordinates(shape: Sequence[int], x) -> list:
    """Split tangent coordinates into per-mode blocks of sizes ``n_1, n_2-1, ...``."""
    x = np.asarray(x, dtype=float)
    sizes = [shape[0]] + [n - 1 for n in shape[1:]]
    if x.size != sum(sizes):
        raise ValueError(f"expected {sum(sizes)} tangent coordinates, got {x.size}")
    return np.split(x, np.cumsum(sizes)[:-1])


def tangent_basis_apply(p: RankOnePoint, x) -> np.ndarray:
    """The tangent tensor ``T_p x``."""
    blocks = split_coordinates(p.shape, x)
    out = np.zeros(p.shape)
    for k, (Uk, xk) in enumerate(zip(p.basis_blocks(), blocks)):
        if xk.size == 0:
            continue
        factors = list(p.units)
        factors[k] = Uk @ xk
        out += outer(factors)
    return out


def retract(p: RankOnePoint, x) -> RankOnePoint:
    """ST-HOSVD retraction of the tangent vector with coordinates ``x`` at ``p``.

    ``p + T_p x`` has an orthogonal Tucker decomposition with factors
    ``[â_k, q_k]`` and a ``2 x ... x 2`` core holding only ``d + 1`` nonzeros,
    so its rank-(1, ..., 1) ST-HOSVD is obtained from the core alone.
    """
    x = np.asarray(x, dtype=float)
    blocks = split_coordinates(p.shape, x)
    if not np.any(x):
        return p
    d = p.order
    alpha = p.scale

    # mode 1: split alpha*â_1 + x_1 into its â_1 component and the rest
    y1 = alpha * p.units[0] + blocks[0]
    c = float(p.units[0] @ y1)
    w1 = y1 - c * p.units[0]
    tiny = np.finfo(float).eps * max(alpha, np.linalg.norm(x))
    Qs = []
    entries = []
    b1 = np.linalg.norm(w1)
    if b1 > tiny:
        Qs.append(np.column_stack([p.units[0], w1 / b1]))
        entries.append(((1,) + (0,) * (d - 1), b1))
    else:
        Qs.append(p.units[0][:, None])
    for k in range(1, d):
        vk = p.bases[k] @ blocks[k] if blocks[k].size else np.zeros(p.shape[k])
        bk = np.linalg.norm(vk)
        if bk > tiny:
            Qs.append(np.column_stack([p.units[k], vk / bk]))
            idx = [0] * d
            idx[k] = 1
            entries.append((tuple(idx), bk))
        else:
            Qs.append(p.units[k][:, None])

    core = np.zeros(tuple(Q.shape[1] for Q in Qs))
    core[(0,) * d] = c
    for idx, val in entries:
        core[idx] = val

    small = st_hosvd(core, (1,) * d)
    lam = float(small.core.reshape(-1)[0])
    if not np.isfinite(lam) or abs(lam) <= tiny:
        raise DegenerateRetractionError("retraction truncated the tangent step to zero")
    vectors = [Q @ z[:, 0] for Q, z in zip(Qs, small.factors)]
    vectors[0] = lam * vectors[0]
    return make_rank_one(vectors)


def retract_full(p: RankOnePoint, x) -> RankOnePoint:
    """Reference retraction via ST-HOSVD of the explicitly formed ``p + T_p x``."""
    T = p.tensor() + tangent_basis_apply(p, x)
    if not np.any(T):
        raise DegenerateRetractionError("p + t is zero")
    dec = st_hosvd(T, (1,) * p.order)
    vectors = [U[:, 0] for U in dec.factors]
    vectors[0] = float(dec.core.reshape(-1)[0]) * vectors[0]
    return make_rank_one(vectors)


__all__ = [
    "DegenerateRetractionError",
    "RankOnePoint",
    "make_rank_one",
    "retract",
    "retract_full",
    "split_coordinates",
    "tangent_basis_apply",
    "tangent_dimension",
]
