"""Operator-splitting solvers for American two-asset options under the
Merton jump-diffusion model."""

from .model import (ModelParams, OptionSpec, PayoffKind, parameter_set,
                    expected_relative_jump, payoff)
from .grid import GridSpec, SpatialGrid, build_grid, default_spec
from .problem import Problem, discretize, discretize_preset_grid
from .stepping import Method, MethodConfig, RunResult, run, imex_euler_pair
from .experiments import (RoiSpec, ConvergenceStudy, convergence_order,
                          matched_steps, reference_solution, temporal_error,
                          value_table, extract_eer)

__all__ = [
    "ModelParams", "OptionSpec", "PayoffKind", "parameter_set",
    "expected_relative_jump", "payoff",
    "GridSpec", "SpatialGrid", "build_grid", "default_spec",
    "Problem", "discretize", "discretize_preset_grid",
    "Method", "MethodConfig", "RunResult", "run", "imex_euler_pair",
    "RoiSpec", "ConvergenceStudy", "convergence_order", "matched_steps",
    "reference_solution", "temporal_error", "value_table", "extract_eer",
]

__version__ = "0.1.0"
