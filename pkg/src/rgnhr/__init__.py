"""Riemannian Gauss-Newton trust-region solver for low-rank CPD with hot restarts."""
from .conditioning import ConditionReport, GateVerdict, cholesky_gate, condition_number, spectral_gate
from .cpd import (
    CpdPoint,
    DegenerateCoefficientsError,
    assemble_T_explicit,
    evaluate,
    gn_hessian,
    gradient,
    objective,
    optimal_coefficients,
)
from .segre import DegenerateRetractionError, RankOnePoint, make_rank_one, retract, tangent_basis_apply
from .solver import RunReport, SolverConfig, hot_restart, random_start, solve
from .tensor import TuckerDecomposition, flatten, khatri_rao, mode_multiply, st_hosvd, vectorize

__version__ = "0.1.0"
