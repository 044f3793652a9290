"""Discounted and ergodic first-order mean field games on the torus via convex duality."""

from .config import RunConfig, load_config
from .dual import DiscountSolution, SolverParams, solve_dual
from .ergodic import (
    ErgodicSolution,
    constant_solution_density,
    geometric_schedule,
    optimal_lambda,
    selection_functional,
    vanishing_discount_sweep,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    MFGError,
    NumericError,
    SweepError,
    UsageError,
)
from .functionals import evaluate_A, evaluate_A_ergodic, evaluate_B
from .grid import Field, TorusGrid
from .primal import PrimalIterate, solve_primal
from .problem import CouplingSpec, HamiltonianSpec, Potential, ProblemSpec, flat_spec, power_spec
from .verification import ResidualReport, supersolution_proxy, uniqueness_set, weak_solution_residuals

__all__ = [
    "ConfigError", "ConvergenceError", "CouplingSpec", "DiscountSolution", "DomainError",
    "ErgodicSolution", "Field", "HamiltonianSpec", "MFGError", "NumericError", "Potential",
    "PrimalIterate", "ProblemSpec", "ResidualReport", "RunConfig", "SolverParams", "SweepError",
    "TorusGrid", "UsageError", "constant_solution_density", "evaluate_A", "evaluate_A_ergodic",
    "evaluate_B", "flat_spec", "geometric_schedule", "load_config", "optimal_lambda", "power_spec",
    "selection_functional", "solve_dual", "solve_primal", "supersolution_proxy", "uniqueness_set",
    "vanishing_discount_sweep", "weak_solution_residuals",
]
