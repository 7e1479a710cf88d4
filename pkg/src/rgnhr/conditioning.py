"""Condition number of a CPD and the Cholesky-based ill-conditioning gate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cpd import CpdPoint, assemble_T_explicit, gn_hessian

# A decomposition is ill-posed when ς_min(T_p) < SINGULAR_CUTOFF * ς_max(T_p).
SINGULAR_CUTOFF = 1e-14
# Hot restarts fire when some diagonal entry of the Cholesky factor is below this.
CHOLESKY_DIAGONAL_THRESHOLD = 1e-5


@dataclass(frozen=True)
class ConditionReport:
    kappa: float
    sigma_min: float
    method: str

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "sigma_min": self.sigma_min, "method": self.method}


def condition_number(p: CpdPoint, method: str = "svd-explicit") -> ConditionReport:
    """Condition number ``κ(p) = 1 / ς_min(T_p)``.

    ``method="svd-explicit"`` takes the SVD of the assembled ``T_p``.
    ``method="eig-of-H"`` uses ``λ_min(H_p)^{1/2}``; it is cheaper but loses
    accuracy roughly as ``κ²`` times machine precision.
    """
    if method == "svd-explicit":
        s = np.linalg.svd(assemble_T_explicit(p), compute_uv=False)
        s_max, s_min = float(s[0]), float(s[-1])
    elif method == "eig-of-H":
        w = np.linalg.eigvalsh(gn_hessian(p))
        s_max = math.sqrt(max(float(w[-1]), 0.0))
        s_min = math.sqrt(max(float(w[0]), 0.0))
    else:
        raise ValueError(f"unknown method {method!r}")
    if s_min < SINGULAR_CUTOFF * s_max:
        return ConditionReport(kappa=math.inf, sigma_min=s_min, method=method)
    return ConditionReport(kappa=1.0 / s_min, sigma_min=s_min, method=method)


@dataclass(frozen=True)
class GateVerdict:
    """Outcome of :func:`cholesky_gate`.

    ``reason`` is ``None`` for a well-conditioned matrix, otherwise
    ``"breakdown"`` or ``"small-diagonal"``.  ``cholesky`` holds the lower
    factor whenever the factorization itself succeeded.
    """

    reason: Optional[str]
    cholesky: Optional[np.ndarray] = None

    @property
    def well_conditioned(self) -> bool:
        return self.reason is None


def cholesky_gate(H, threshold: float = CHOLESKY_DIAGONAL_THRESHOLD) -> GateVerdict:
    """Attempt ``H = L L^T`` and flag breakdowns or diagonals of ``L`` below ``threshold``.

    Any diagonal ``L_ii < threshold`` certifies ``κ_2(H) >= threshold^-2``.
    """
    try:
        L = np.linalg.cholesky(np.asarray(H, dtype=float))
    except np.linalg.LinAlgError:
        return GateVerdict("breakdown")
    diag = np.diag(L)
    if not np.all(np.isfinite(diag)):
        return GateVerdict("breakdown")
    if np.min(diag) < threshold:
        return GateVerdict("small-diagonal", L)
    return GateVerdict(None, L)


def spectral_gate(H, threshold: float = CHOLESKY_DIAGONAL_THRESHOLD) -> GateVerdict:
    """Eigenvalue-based alternative to :func:`cholesky_gate`.

    Flags ``λ_min(H) < threshold²``, the same bound on ``κ_2`` the Cholesky
    diagonal certifies, but without false alarms from pivot growth.  Costs
    an extra symmetric eigendecomposition per iteration.
    """
    H = np.asarray(H, dtype=float)
    lam = float(np.linalg.eigvalsh(H)[0])
    if not lam > 0:
        return GateVerdict("breakdown")
    verdict = cholesky_gate(H, threshold=0.0)
    if verdict.cholesky is None:
        return GateVerdict("breakdown")
    if lam < threshold * threshold:
        return GateVerdict("small-diagonal", verdict.cholesky)
    return GateVerdict(None, verdict.cholesky)


GATES = {"cholesky": cholesky_gate, "spectral": spectral_gate}
