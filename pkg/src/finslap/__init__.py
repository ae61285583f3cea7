"""Anisotropic p-Laplace problems with variable singular exponent."""

from finslap.convex import SolveOptions, SolverReport, eigenpair, solve_dirichlet
from finslap.energy import ConvexEnergy, PerturbedEnergy, fd_check
from finslap.errors import ConvergenceError, InvariantViolation, UnsupportedRegime
from finslap.grid import Grid, build_grid, seminorm_X
from finslap.multiplicity import MultiplicityError, PerturbedProblem, continuation, mp_constants
from finslap.norms import FinslerNorm, inequality_suite, verify_hypotheses
from finslap.singular import SingularOptions, SingularProblem, solve_singular

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "ConvexEnergy", "FinslerNorm", "Grid", "InvariantViolation", "MultiplicityError",
    "PerturbedEnergy", "PerturbedProblem", "SingularOptions", "SingularProblem", "SolveOptions",
    "SolverReport", "UnsupportedRegime", "build_grid", "continuation", "eigenpair", "fd_check",
    "inequality_suite", "mp_constants", "seminorm_X", "solve_dirichlet", "solve_singular",
    "verify_hypotheses",
]
