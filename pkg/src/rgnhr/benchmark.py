"""Synthetic CPD experiments and expected-time-to-success estimates.

A run samples one true decomposition, perturbs its tensor once, then starts
each solver configuration from ``num_starts`` random points.  Each attempt
is classified as a success when the residual is within 10% of the noise
level and the condition number is at most 50 times that of the truth.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .conditioning import condition_number
from .cpd import CpdPoint, evaluate
from .solver import SolverConfig, make_rng, solve

DEFAULT_SHAPE_F = (10, 10, 10)
REFERENCE_SHAPE_F = (15, 15, 15)
REFERENCE_SHAPE_G = (13, 11, 9)
DEFAULT_STARTS = {"F": 25, "G": 50}
RESIDUAL_FACTOR = 1.1
KAPPA_FACTOR = 50.0


def correlation_factor(r: int, c: float) -> np.ndarray:
    """Upper Cholesky factor ``R_c`` with ``R_c^T R_c = c 11^T + (1 - c) I``."""
    if not 0 <= c < 1:
        raise ValueError("correlation c must lie in [0, 1)")
    M = c * np.ones((r, r)) + (1.0 - c) * np.eye(r)
    return np.linalg.cholesky(M).T


def sample_model_F(r: int, c: float, s: float, rng: np.random.Generator,
                   shape: Sequence[int] = DEFAULT_SHAPE_F) -> CpdPoint:
    """Correlated columns with term norms growing from about 1 to about ``10^s``.

    ``A_k = N_k R_c diag(10^{s/(3r)}, 10^{2s/(3r)}, ..., 10^{rs/(3r)})``.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    Rc = correlation_factor(r, c)
    scaling = np.diag(10.0 ** (np.arange(1, r + 1) * s / (3.0 * r)))
    factors = [rng.standard_normal((n, r)) @ Rc @ scaling for n in shape]
    return CpdPoint.from_factors(factors)


def sample_model_G(r: int, s: float, rng: np.random.Generator,
                   shape: Sequence[int] = REFERENCE_SHAPE_G, core_rank: int = 5) -> CpdPoint:
    """Terms close to a tensor of multilinear rank ``(core_rank, ...)`` as ``s -> 0``.

    ``A_k = N_k (10^{(2-s)/2} I_r + X_k Y_k^T) diag(5^{0/(r-1)}, ..., 5^{(r-1)/(r-1)})``.
    """
    if r < 2:
        raise ValueError("model G needs r >= 2")
    if s < 0:
        raise ValueError("s must be nonnegative")
    scaling = np.diag(5.0 ** (np.arange(r) / (r - 1)))
    factors = []
    for n in shape:
        N = rng.standard_normal((n, r))
        X = rng.standard_normal((r, core_rank))
        Y = rng.standard_normal((r, core_rank))
        factors.append(N @ (10.0 ** ((2.0 - s) / 2.0) * np.eye(r) + X @ Y.T) @ scaling)
    return CpdPoint.from_factors(factors)


def perturb(A, e: float, rng: np.random.Generator) -> np.ndarray:
    """``A / ||A|| + 10^{-e} E / ||E||`` with Gaussian ``E``."""
    A = np.asarray(A, dtype=float)
    norm_A = np.linalg.norm(A)
    if norm_A == 0:
        raise ValueError("cannot perturb the zero tensor")
    if e <= 0:
        raise ValueError("noise exponent e must be positive")
    E = rng.standard_normal(A.shape)
    return A / norm_A + 10.0 ** (-e) * E / np.linalg.norm(E)


def classify_success(result: CpdPoint, truth_kappa: float, A_clean, e: float,
                     result_kappa: Optional[float] = None) -> bool:
    """Residual ``||A - Φ(result)|| <= 1.1 * 10^{-e}`` and ``κ(result) <= 50 κ(truth)``.

    ``truth_kappa`` may also be the true :class:`CpdPoint`.
    """
    if isinstance(truth_kappa, CpdPoint):
        truth_kappa = condition_number(truth_kappa).kappa
    res = float(np.linalg.norm(np.asarray(A_clean) - evaluate(result)))
    if res > RESIDUAL_FACTOR * 10.0 ** (-e):
        return False
    if result_kappa is None:
        result_kappa = condition_number(result).kappa
    return result_kappa <= KAPPA_FACTOR * truth_kappa


@dataclass(frozen=True)
class EtsEstimate:
    p_success: float
    t_success: float
    t_fail: float
    ets: float
    attempts: int = 0

    def to_dict(self) -> dict:
        return {k: _json_float(v) for k, v in asdict(self).items()}


def ets_formula(p_success: float, t_success: float, t_fail: float) -> float:
    if p_success <= 0:
        return math.inf
    p_fail = 1.0 - p_success
    t_fail = 0.0 if p_fail == 0 else t_fail
    return (p_fail * t_fail + p_success * t_success) / p_success


def estimate_ets(outcomes: Sequence) -> EtsEstimate:
    """ETS from ``(success, seconds)`` pairs or mappings with those keys."""
    if not outcomes:
        raise ValueError("need at least one outcome")
    pairs = [(bool(o["success"]), float(o["seconds"])) if isinstance(o, dict)
             else (bool(o[0]), float(o[1])) for o in outcomes]
    good = [t for ok, t in pairs if ok]
    bad = [t for ok, t in pairs if not ok]
    p = len(good) / len(pairs)
    t_s = float(np.mean(good)) if good else math.nan
    t_f = float(np.mean(bad)) if bad else math.nan
    return EtsEstimate(p, t_s, t_f, ets_formula(p, t_s, t_f), len(pairs))


def simulate_retries(p_success: float, t_success: float, t_fail: float,
                     trials: int, rng: np.random.Generator) -> float:
    """Mean time until the first success when attempts are retried independently."""
    failures = rng.geometric(p_success, size=trials) - 1
    return float(np.mean(failures * t_fail + t_success))


SOLVER_ALIASES = {"hr": "hot-restarts", "reg": "tikhonov-reg"}


@dataclass
class ExperimentSpec:
    model: str = "F"
    shape: Optional[tuple] = None
    rank: int = 5
    c: float = 0.0
    s: float = 1.0
    e: float = 5.0
    num_starts: Optional[int] = None
    solvers: tuple = ("hr", "reg")
    seed: int = 0
    tau_dx: float = 1e-12
    k_max: int = 1500
    r_max: int = 500
    workers: int = 1

    def __post_init__(self):
        self.model = self.model.upper()
        if self.shape is None:
            self.shape = DEFAULT_SHAPE_F if self.model == "F" else REFERENCE_SHAPE_G
        if self.num_starts is None:
            self.num_starts = DEFAULT_STARTS.get(self.model, 25)
        self.shape = tuple(int(n) for n in self.shape)
        self.solvers = tuple(self.solvers)
        if self.model not in ("F", "G"):
            raise ValueError("model must be 'F' or 'G'")
        if not 0 <= self.c < 1:
            raise ValueError("c must lie in [0, 1)")
        if self.s < 0 or self.e <= 0 or self.num_starts < 1:
            raise ValueError("need s >= 0, e > 0 and at least one start")
        for name in self.solvers:
            if name not in SOLVER_ALIASES:
                raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVER_ALIASES)}")

    def solver_config(self, name: str, seed: int) -> SolverConfig:
        return SolverConfig(tau_f=0.0, tau_df=10.0 ** (-2 * self.e), tau_dx=self.tau_dx,
                            k_max=self.k_max, r_max=self.r_max,
                            variant=SOLVER_ALIASES[name], rng_seed=seed)

    @property
    def reference_shape(self) -> bool:
        return self.shape == (REFERENCE_SHAPE_F if self.model == "F" else REFERENCE_SHAPE_G)


@dataclass
class Attempt:
    solver: str
    index: int
    success: bool
    seconds: float
    residual: float
    kappa: float
    status: str
    iterations: int
    restarts: int
    trace: str = field(default="", repr=False)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    truth_kappa: float
    attempts: list
    estimates: dict
    speedups: dict

    def to_dict(self) -> dict:
        spec = asdict(self.spec)
        spec["shape"] = list(self.spec.shape)
        spec["solvers"] = list(self.spec.solvers)
        spec["reference_shape"] = self.spec.reference_shape
        return {
            "spec": spec,
            "truth_kappa": _json_float(self.truth_kappa),
            "estimates": {k: v.to_dict() for k, v in self.estimates.items()},
            "speedups": {k: _json_float(v) for k, v in self.speedups.items()},
            "attempts": [
                {k: _json_float(v) for k, v in asdict(a).items() if k != "trace"}
                for a in self.attempts
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["solver", "p_success", "t_success", "t_fail", "ets", "speedup"])
        for name, est in self.estimates.items():
            w.writerow([name, est.p_success, est.t_success, est.t_fail, est.ets,
                        self.speedups.get(name, math.nan)])
        return buf.getvalue()


def _json_float(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _run_attempt(spec: ExperimentSpec, name: str, index: int, B, A_clean,
                 truth_kappa: float, seed: int, keep_trace: bool) -> Attempt:
    config = spec.solver_config(name, seed)
    start = time.perf_counter()
    try:
        report = solve(B, spec.rank, config)
    except Exception as exc:  # solver failures count as failed attempts
        return Attempt(name, index, False, time.perf_counter() - start, math.nan,
                       math.inf, f"error: {exc}", 0, 0)
    ok = classify_success(report.final_point, truth_kappa, A_clean, spec.e,
                          result_kappa=report.final_kappa)
    seconds = time.perf_counter() - start
    res = float(np.linalg.norm(A_clean - evaluate(report.final_point)))
    return Attempt(name, index, ok, seconds, res, report.final_kappa, report.status,
                   len(report.iterations), report.restarts,
                   report.trace_csv() if keep_trace else "")


def run_experiment(spec: ExperimentSpec, keep_traces: bool = False) -> ExperimentResult:
    """Sample a problem and compare the requested solver variants on it.

    Attempt ``i`` of every solver uses the same seed, so both variants start
    from identical random points.  Wall time covers the solve and the final
    condition-number evaluation, not problem generation.
    """
    rng = make_rng(spec.seed)
    if spec.model == "F":
        truth = sample_model_F(spec.rank, spec.c, spec.s, rng, spec.shape)
    else:
        truth = sample_model_G(spec.rank, spec.s, rng, spec.shape)
    A = evaluate(truth)
    A_clean = A / np.linalg.norm(A)
    B = perturb(A, spec.e, rng)
    truth_kappa = condition_number(truth).kappa
    seeds = rng.integers(0, 2**63 - 1, size=spec.num_starts)

    jobs = [(name, i, int(seeds[i])) for name in spec.solvers for i in range(spec.num_starts)]
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            attempts = list(pool.map(
                lambda job: _run_attempt(spec, job[0], job[1], B, A_clean, truth_kappa,
                                         job[2], keep_traces), jobs))
    else:
        attempts = [_run_attempt(spec, name, i, B, A_clean, truth_kappa, seed, keep_traces)
                    for name, i, seed in jobs]
    attempts.sort(key=lambda a: (spec.solvers.index(a.solver), a.index))

    estimates = {
        name: estimate_ets([(a.success, a.seconds) for a in attempts if a.solver == name])
        for name in spec.solvers
    }
    base = estimates.get("hr", estimates[spec.solvers[0]]).ets
    speedups = {name: _ratio(est.ets, base) for name, est in estimates.items()}
    return ExperimentResult(spec, truth_kappa, attempts, estimates, speedups)


def _ratio(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return math.nan
    if math.isinf(b):
        return 0.0
    return a / b


__all__ = [
    "Attempt",
    "EtsEstimate",
    "ExperimentResult",
    "ExperimentSpec",
    "classify_success",
    "correlation_factor",
    "estimate_ets",
    "ets_formula",
    "perturb",
    "run_experiment",
    "sample_model_F",
    "sample_model_G",
    "simulate_retries",
]
