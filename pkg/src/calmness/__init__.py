"""Calmness and Lipschitz moduli of the optimal set map of a linear program under
perturbations of the cost vector and the right-hand side."""

from .certify import ConditionReport, certify
from .empirical import EmpiricalResult, estimate_clm, replay_sequence
from .geometry import inverse_norm, min_dual_norm_point, wolfe_min_norm_point
from .lp_core import NormSpec, Problem, ProblemError, load_problem, solve_lp
from .moduli import ModulusReport, compute_report
from .semiinf import SemiInfSource, discretize, refine_and_track

__all__ = [
    "ConditionReport", "EmpiricalResult", "ModulusReport", "NormSpec", "Problem",
    "ProblemError", "SemiInfSource", "certify", "compute_report", "discretize",
    "estimate_clm", "inverse_norm", "load_problem", "min_dual_norm_point",
    "refine_and_track", "replay_sequence", "solve_lp", "wolfe_min_norm_point",
]
__version__ = "0.1.0"
