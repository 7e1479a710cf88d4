"""Dogleg trust-region steps and the radius schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

ACCEPT_THRESHOLD = 0.2
ENLARGE_THRESHOLD = 0.6


def newton_direction(L, g) -> np.ndarray:
    """Solve ``L L^T p = -g`` with two triangular solves."""
    y = scipy.linalg.solve_triangular(L, -np.asarray(g, dtype=float), lower=True)
    return scipy.linalg.solve_triangular(L, y, lower=True, trans="T")


def cauchy_point(H, g) -> np.ndarray:
    """Minimiser of the quadratic model along ``-g``: ``-(g^T g / g^T H g) g``."""
    g = np.asarray(g, dtype=float)
    curvature = float(g @ (H @ g))
    if curvature <= 0:
        raise ValueError("model curvature along the gradient is not positive")
    return -(float(g @ g) / curvature) * g


def model_decrease(H, g, step) -> float:
    """``m(0) - m(step)`` for ``m(s) = f + g^T s + ½ s^T H s``."""
    step = np.asarray(step, dtype=float)
    return -float(g @ step + 0.5 * step @ (H @ step))


@dataclass(frozen=True)
class DoglegStep:
    direction: np.ndarray
    kind: str  # "newton", "cauchy" or "interpolated"
    model_decrease: float
    tau: float = math.nan

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.direction))


def dogleg_tau(p_c, p_n, delta: float) -> float:
    """``τ ∈ [1, 2]`` with ``||p_C + (τ-1)(p_N - p_C)|| = Δ``; needs ``||p_C|| < Δ < ||p_N||``."""
    diff = p_n - p_c
    a = float(diff @ diff)
    b = 2.0 * float(p_c @ diff)
    c = float(p_c @ p_c) - delta * delta
    disc = math.sqrt(max(b * b - 4.0 * a * c, 0.0))
    # c < 0, so this is the positive root written without cancellation
    s = (-b + disc) / (2.0 * a) if b <= 0 else (-2.0 * c) / (b + disc)
    return 1.0 + min(max(s, 0.0), 1.0)


def dogleg(H, g, p_n, p_c, delta: float) -> DoglegStep:
    """Dogleg approximation of the trust-region subproblem.

    A Cauchy point outside the ball is scaled back onto its boundary.
    """
    p_n = np.asarray(p_n, dtype=float)
    p_c = np.asarray(p_c, dtype=float)
    norm_n = np.linalg.norm(p_n)
    norm_c = np.linalg.norm(p_c)
    if norm_n <= delta:
        step, kind, tau = p_n, "newton", 2.0
    elif norm_c >= delta:
        step, kind, tau = (delta / norm_c) * p_c, "cauchy", 1.0
    else:
        tau = dogleg_tau(p_c, p_n, delta)
        step, kind = p_c + (tau - 1.0) * (p_n - p_c), "interpolated"
    return DoglegStep(step, kind, model_decrease(H, g, step), tau)


def trustworthiness(f_old: float, f_new: float, decrease: float) -> float:
    """Ratio of actual to predicted decrease.

    A nonpositive predicted decrease yields ``-inf``: the step is rejected
    and the radius shrinks maximally.
    """
    if not decrease > 0:
        return -math.inf
    return (f_old - f_new) / decrease


def shrink_factor(rho: float) -> float:
    """``1/3 + (2/3) / (1 + exp(-14 (ρ - 1/3)))``."""
    if math.isnan(rho):
        return 1.0 / 3.0
    return 1.0 / 3.0 + (2.0 / 3.0) * float(expit(14.0 * (rho - 1.0 / 3.0)))


@dataclass
class TrustRegionState:
    delta: float
    delta_max: float
    accept_threshold: float = ACCEPT_THRESHOLD
    enlarge_threshold: float = ENLARGE_THRESHOLD

    def accepts(self, rho: float) -> bool:
        return rho > self.accept_threshold

    def update(self, rho: float, step_norm: float) -> float:
        self.delta = update_radius(self, rho, step_norm)
        return self.delta


def update_radius(state: TrustRegionState, rho: float, step_norm: float) -> float:
    if rho > state.enlarge_threshold:
        return min(2.0 * step_norm, state.delta_max)
    return min(shrink_factor(rho) * state.delta, state.delta_max)
