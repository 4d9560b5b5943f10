"""Dirichlet solvers for the homogeneous complex Monge-Ampere equation."""
from .envelope import EnvelopeOperator, solve_envelope
from .green import assemble_green, solve, uniqueness_check
from .problem import GreenProblem, SolveReport, SolverConfig
from .regularized import solve_regularized

__all__ = ["GreenProblem", "SolveReport", "SolverConfig", "EnvelopeOperator", "solve_envelope",
           "solve_regularized", "assemble_green", "uniqueness_check", "solve"]
