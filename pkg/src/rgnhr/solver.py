"""Riemannian Gauss-Newton trust-region solver with hot restarts."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conditioning import GATES, cholesky_gate, condition_number
from .cpd import (
    CpdPoint,
    DegenerateCoefficientsError,
    evaluate,
    gn_hessian,
    gradient,
    is_strictly_subgeneric,
    objective,
    optimal_coefficients,
    retract_point,
)
from .segre import DegenerateRetractionError, make_rank_one
from .trust_region import (
    TrustRegionState,
    cauchy_point,
    dogleg,
    model_decrease,
    newton_direction,
    trustworthiness,
)

log = logging.getLogger(__name__)

VARIANTS = ("hot-restarts", "tikhonov-reg")
STATUSES = ("converged-f", "converged-df", "converged-dx", "max-iter", "max-restarts")
RANDOM_START_RETRIES = 20


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; runs with equal seeds draw identical numbers."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class SolverConfig:
    tau_f: float = 0.0
    tau_df: float = 1e-10
    tau_dx: float = 1e-12
    k_max: int = 1500
    r_max: int = 500
    variant: str = "hot-restarts"
    rng_seed: int = 0
    gate: str = "cholesky"

    def __post_init__(self):
        if min(self.tau_f, self.tau_df, self.tau_dx) < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.r_max < 0:
            raise ValueError("r_max must be nonnegative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.gate not in GATES:
            raise ValueError(f"gate must be one of {tuple(GATES)}, got {self.gate!r}")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    f: float
    delta: float
    rho: float
    accepted: bool
    restart_triggered: bool


@dataclass
class RunReport:
    iterations: list
    final_point: CpdPoint
    final_kappa: float
    status: str
    wall_time: float
    restarts: int = 0
    f_initial: float = math.nan

    @property
    def f(self) -> float:
        return self.iterations[-1].f if self.iterations else self.f_initial

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "f", "delta", "rho", "accepted", "restart"])
        for it in self.iterations:
            w.writerow([it.k, repr(it.f), repr(it.delta), repr(it.rho),
                        int(it.accepted), int(it.restart_triggered)])
        return buf.getvalue()


class RestartBudgetExceeded(RuntimeError):
    def __init__(self, attempts: int, point: CpdPoint):
        super().__init__(f"no well-conditioned point after {attempts} hot restarts")
        self.attempts = attempts
        self.point = point


def delta_min(p: CpdPoint) -> float:
    """``0.1 sqrt((d / r) Σ_i ||a_i^(1)||²)`` for the norm-balanced representatives."""
    first = p.factors()[0]
    return 0.1 * math.sqrt(p.order / p.rank * float(np.sum(first * first)))


def factor_norm(p: CpdPoint) -> float:
    """``(Σ_k ||A_k||_F²)^{1/2}`` of the balanced factor matrices."""
    return math.sqrt(sum(float(np.sum(A * A)) for A in p.factors()))


def random_start(shape, r: int, B, rng: np.random.Generator) -> CpdPoint:
    """Gaussian rank-1 terms, optimally rescaled against ``B``.

    Draws are repeated when the rank-1 terms are numerically dependent or a
    coefficient vanishes; after ``RANDOM_START_RETRIES`` failures the last
    :class:`DegenerateCoefficientsError` propagates.
    """
    shape = tuple(int(n) for n in shape)
    if not is_strictly_subgeneric(shape, r):
        raise ValueError(f"rank {r} is not strictly subgeneric for shape {shape}")
    err = None
    for _ in range(RANDOM_START_RETRIES):
        p = CpdPoint.from_factors([rng.standard_normal((n, r)) for n in shape])
        try:
            return optimal_coefficients(p, B)[1]
        except DegenerateCoefficientsError as exc:
            err = exc
            log.debug("random start rejected: %s", exc)
    raise err


def _perturb(p: CpdPoint, alpha: float, rng: np.random.Generator) -> CpdPoint:
    terms = []
    for t in p.terms:
        vecs = []
        for a in t.vectors:
            n = rng.standard_normal(a.size)
            vecs.append((1.0 - alpha) * a + alpha * (np.linalg.norm(a) / np.linalg.norm(n)) * n)
        terms.append(make_rank_one(vecs))
    return CpdPoint(terms)


def restart_step_size(p: CpdPoint, B) -> float:
    """``min{1/4, 10 ||B - Φ(p)|| / ||B||}``."""
    B = np.asarray(B, dtype=float)
    rel = np.linalg.norm(evaluate(p) - B) / np.linalg.norm(B)
    return min(0.25, 10.0 * float(rel))


def hot_restart(p: CpdPoint, B, rng: np.random.Generator, max_attempts: int,
                gate=cholesky_gate):
    """Randomly perturb all rank-1 terms until the Gauss-Newton Hessian passes the gate.

    Attempt ``t`` moves every factor vector a fraction ``min(t α̂, 1)`` towards
    an independent Gaussian direction of the same norm and re-solves the
    optimal coefficients.  Returns ``(point, hessian, verdict, attempts)``.

    Raises
    ------
    RestartBudgetExceeded
        When ``max_attempts`` perturbations all fail the gate.
    """
    alpha_hat = restart_step_size(p, B)
    current = p
    for t in range(1, max_attempts + 1):
        alpha = min(t * alpha_hat, 1.0)
        try:
            candidate = _perturb(p, alpha, rng)
            _, candidate = optimal_coefficients(candidate, B)
        except (DegenerateCoefficientsError, ValueError) as exc:
            log.debug("hot restart attempt %d discarded: %s", t, exc)
            continue
        current = candidate
        H = gn_hessian(current)
        verdict = gate(H)
        if verdict.well_conditioned:
            return current, H, verdict, t
    raise RestartBudgetExceeded(max_attempts, current)


def tikhonov_shift(H, f: float, norm_B: float) -> float:
    """``1e-10 (||Φ(p) - B|| / ||B||)^{3/4} ||H||_F``."""
    rel = math.sqrt(2.0 * f) / norm_B
    return 1e-10 * rel ** 0.75 * float(np.linalg.norm(H))


def _regularized_newton(H, g, shift: float) -> np.ndarray:
    M = H + shift * np.eye(H.shape[0])
    verdict = cholesky_gate(M, threshold=0.0)
    if verdict.cholesky is not None and verdict.reason is None:
        return newton_direction(verdict.cholesky, g)
    # the shift underflowed relative to rounding in H; fall back to a least-squares solve
    return -np.linalg.lstsq(M, g, rcond=None)[0]


def solve(B, r: int, config: Optional[SolverConfig] = None,
          initial: Optional[CpdPoint] = None) -> RunReport:
    """Approximate ``B`` by a rank-``r`` CPD.

    Parameters
    ----------
    B : array_like
        Dense target tensor.
    r : int
        Target rank; must be strictly subgeneric for the shape of ``B``.
    config : SolverConfig, optional
    initial : CpdPoint, optional
        Starting point; by default a random start drawn from the config seed.
    """
    config = config or SolverConfig()
    B = np.asarray(B, dtype=float)
    norm_B = float(np.linalg.norm(B))
    if norm_B == 0:
        raise ValueError("cannot approximate the zero tensor")
    if not is_strictly_subgeneric(B.shape, r):
        raise ValueError(f"rank {r} is not strictly subgeneric for shape {B.shape}")
    start = time.perf_counter()
    rng = make_rng(config.rng_seed)
    p = initial if initial is not None else random_start(B.shape, r, B, rng)
    if p.shape != B.shape or p.rank != r:
        raise ValueError("initial point does not match the tensor shape or rank")

    tr = TrustRegionState(delta=0.0, delta_max=norm_B / 2.0)
    tr.delta = min(delta_min(p), tr.delta_max)
    f = objective(p, B)
    f_first = f
    trace: list = []
    restarts = 0
    force_restart = False
    status = None
    hot = config.variant == "hot-restarts"
    gate = GATES[config.gate]

    k = 0
    while status is None:
        if f <= config.tau_f:
            status = "converged-f"
            break
        if k >= config.k_max:
            status = "max-iter"
            break
        k += 1
        restarted = False
        H = gn_hessian(p)
        verdict = gate(H)
        if hot and (force_restart or not verdict.well_conditioned):
            force_restart = False
            try:
                p, H, verdict, used = hot_restart(p, B, rng, config.r_max - restarts, gate)
            except RestartBudgetExceeded as exc:
                restarts += exc.attempts
                trace.append(IterationRecord(k, f, tr.delta, math.nan, False, True))
                status = "max-restarts"
                break
            restarts += used
            restarted = True
            f = objective(p, B)
            tr.delta = min(delta_min(p), tr.delta_max)
        g = gradient(p, B)
        if not np.any(g):
            trace.append(IterationRecord(k, f, tr.delta, math.nan, False, restarted))
            status = "converged-dx"
            break

        if verdict.well_conditioned:
            p_n = newton_direction(verdict.cholesky, g)
        else:
            p_n = _regularized_newton(H, g, tikhonov_shift(H, f, norm_B))
        try:
            p_c = cauchy_point(H, g)
        except ValueError:
            p_c = -g
        step = dogleg(H, g, p_n, p_c, tr.delta)
        if not step.model_decrease > 0:
            # rounding in an exhausted model; fall back to the Cauchy point
            step = dogleg(H, g, p_c, p_c, tr.delta)

        try:
            candidate = retract_point(p, step.direction)
            f_new = objective(candidate, B)
            rho = trustworthiness(f, f_new, step.model_decrease)
        except DegenerateRetractionError:
            candidate, f_new, rho = None, math.nan, -math.inf
            force_restart = hot
        accepted = tr.accepts(rho)
        tr.update(rho, step.norm)
        f_prev = f
        step_scale = factor_norm(p)
        if accepted:
            p, f = candidate, f_new
        trace.append(IterationRecord(k, f, tr.delta, rho, accepted, restarted))
        log.debug("k=%d f=%.3e delta=%.3e rho=%.3f %s", k, f, tr.delta, rho,
                  step.kind if accepted else "rejected")

        if f <= config.tau_f:
            status = "converged-f"
        elif accepted and f_first > 0 and abs(f_prev - f) / f_first <= config.tau_df:
            status = "converged-df"
        elif step.norm / step_scale <= config.tau_dx:
            status = "converged-dx"

    kappa = condition_number(p).kappa
    return RunReport(
        iterations=trace,
        final_point=p,
        final_kappa=kappa,
        status=status,
        wall_time=time.perf_counter() - start,
        restarts=restarts,
        f_initial=f_first,
    )


__all__ = [
    "IterationRecord",
    "RestartBudgetExceeded",
    "RunReport",
    "SolverConfig",
    "delta_min",
    "hot_restart",
    "make_rng",
    "model_decrease",
    "random_start",
    "restart_step_size",
    "solve",
    "tikhonov_shift",
]
