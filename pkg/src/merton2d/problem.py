"""Fully discretized pricing problem: grid, operators and payoff vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, SpatialGrid, build_grid, default_spec
from .jump import JumpOperator
from .model import ModelParams, OptionSpec, payoff
from .operators import OperatorSet, assemble_operators

__all__ = ["Problem", "discretize", "discretize_preset_grid"]


@dataclass(frozen=True)
class Problem:
    params: ModelParams
    option: OptionSpec
    grid: SpatialGrid
    ops: OperatorSet
    jump: JumpOperator
    payoff_grid: np.ndarray  # payoff evaluated on all grid nodes

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


def discretize(params: ModelParams, option: OptionSpec, spec1: GridSpec,
               spec2: GridSpec | None = None, log_safety: float = 1.0) -> Problem:
    grid = build_grid(spec1, spec2)
    ops = assemble_operators(params, grid)
    jump = JumpOperator(params, grid, safety=log_safety)
    s1, s2 = grid.meshgrid()
    v0 = payoff(option, s1, s2)
    return Problem(params=params, option=option, grid=grid, ops=ops,
                   jump=jump, payoff_grid=v0)


def discretize_preset_grid(params: ModelParams, option: OptionSpec, nu: int,
                           s_max_mult: float = 8.0, log_safety: float = 1.0) -> Problem:
    """Discretize on the standard grid for the option's strike."""
    spec = default_spec(option.strike, nu, s_max_mult)
    return discretize(params, option, spec, log_safety=log_safety)
