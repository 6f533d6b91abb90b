"""Convergence studies, value tables and early-exercise-region extraction.

Temporal errors are measured against a semidiscrete reference computed on
the same spatial grid with ten times the step budget.  Step counts per
method are matched so every method spends the same number of integral
matrix-vector products over the time interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, SpatialGrid, default_spec, nu_for_interior_width, nu_for_target_m
from .model import ModelParams, OptionSpec, PayoffKind, parameter_set
from .problem import Problem, discretize_preset_grid
from .stepping import Method, MethodConfig, RunDiagnostics, RunResult, run

__all__ = ["RoiSpec", "ErrorRow", "matched_steps", "REFERENCE_STEP_MULT",
           "reference_config", "reference_solution", "roi_mask",
           "temporal_error", "ConvergenceStudy", "convergence_order",
           "extract_eer", "bilinear_interp", "value_table", "default_spots"]

REFERENCE_STEP_MULT = 10


@dataclass(frozen=True)
class RoiSpec:
    """Open square (s_lower, s_upper)^2 over which errors are maximized."""

    s_lower: float
    s_upper: float

    def __post_init__(self):
        if not (0 < self.s_lower < self.s_upper):
            raise ValueError("need 0 < s_lower < s_upper")

    @staticmethod
    def large(strike: float) -> "RoiSpec":
        return RoiSpec(0.5 * strike, 1.5 * strike)

    @staticmethod
    def small(strike: float, payoff_kind: PayoffKind) -> "RoiSpec":
        if payoff_kind is PayoffKind.PUT_ON_MIN:
            return RoiSpec(strike * 7 / 8, strike * 9 / 8)
        return RoiSpec(strike * 9 / 10, strike * 11 / 10)


def matched_steps(method: Method, kappa: int, n_budget: int) -> int:
    """Number of time steps giving every method the same total count of
    integral matrix-vector products for a given budget parameter N."""
    if method is Method.CNFI_IT:
        return math.ceil(2 * n_budget / kappa)
    if method in (Method.IETR_IT, Method.MCS_IT):
        return math.ceil(2 * n_budget / (kappa + 1))
    if method in (Method.CNAB_IT, Method.MCS2_IT, Method.SC2A_IT):
        return 2 * n_budget
    if method is Method.MCS_P:
        return n_budget
    if method is Method.CNFI_P:
        return math.ceil(n_budget / 2)
    raise ValueError(f"no step-matching rule for {method}")


def reference_config(n_budget: int, backend: Method = Method.CNFI_P,
                     kappa: int = 2) -> MethodConfig:
    """Reference runs use ten times the budget-N step count."""
    if backend not in (Method.CNFI_P, Method.MCS2_IT):
        raise ValueError("reference backend must be CNFI_P or MCS2_IT")
    return MethodConfig(backend, n_steps=REFERENCE_STEP_MULT * n_budget, kappa=kappa)


def reference_solution(problem: Problem, n_budget: int,
                       backend: Method = Method.CNFI_P, kappa: int = 2) -> np.ndarray:
    return run(problem, reference_config(n_budget, backend, kappa)).v


def roi_mask(grid: SpatialGrid, roi: RoiSpec) -> np.ndarray:
    """Boolean mask of nodes strictly inside the ROI square."""
    s1 = grid.axis(1).s
    s2 = grid.axis(2).s
    in1 = (s1 > roi.s_lower) & (s1 < roi.s_upper)
    in2 = (s2 > roi.s_lower) & (s2 < roi.s_upper)
    return in1[:, None] & in2[None, :]


def temporal_error(grid: SpatialGrid, v_hat: np.ndarray, v_ref: np.ndarray,
                   roi: RoiSpec) -> float:
    mask = roi_mask(grid, roi)
    if not mask.any():
        raise ValueError("ROI contains no grid nodes")
    return float(np.abs(v_hat - v_ref)[mask].max())


@dataclass(frozen=True)
class ErrorRow:
    method: Method
    kappa: int
    m: int
    n_budget: int
    n_steps: int
    roi: str
    error: float


class ConvergenceStudy:
    """Shared-problem, shared-reference sweep driver.

    Problems and reference solutions are cached per grid resolution so that
    several methods and regions of interest can be evaluated against the
    same reference without recomputation.  Sweeps couple N = m.
    """

    def __init__(self, params: ModelParams, option: OptionSpec,
                 reference_backend: Method = Method.CNFI_P,
                 s_max_mult: float = 8.0, log_safety: float = 1.0):
        self.params = params
        self.option = option
        self.reference_backend = reference_backend
        self.s_max_mult = s_max_mult
        self.log_safety = log_safety
        self._problems: dict[int, Problem] = {}
        self._refs: dict[tuple[int, int], np.ndarray] = {}
        self.run_records: list[tuple[Method, int, int, RunDiagnostics]] = []

    def problem_for(self, target_m: int) -> Problem:
        template = default_spec(self.option.strike, nu=1, s_max_mult=self.s_max_mult)
        nu = nu_for_target_m(template, target_m)
        prob = self._problems.get(nu)
        if prob is None:
            prob = discretize_preset_grid(self.params, self.option, nu,
                                          self.s_max_mult, self.log_safety)
            self._problems[nu] = prob
        return prob

    def reference(self, target_m: int, n_budget: int) -> tuple[Problem, np.ndarray]:
        prob = self.problem_for(target_m)
        key = (prob.grid.axis(1).m, n_budget)
        ref = self._refs.get(key)
        if ref is None:
            ref = reference_solution(prob, n_budget, self.reference_backend)
            self._refs[key] = ref
        return prob, ref

    def errors_at(self, method: Method, kappa: int, target_m: int,
                  rois: dict[str, RoiSpec], n_budget: int | None = None
                  ) -> list[ErrorRow]:
        n_budget = target_m if n_budget is None else n_budget
        prob, ref = self.reference(target_m, n_budget)
        n_steps = matched_steps(method, kappa, n_budget)
        res = run(prob, MethodConfig(method, n_steps=n_steps, kappa=kappa))
        m_actual = prob.grid.axis(1).m
        self.run_records.append((method, kappa, m_actual, res.diagnostics))
        return [ErrorRow(method=method, kappa=kappa, m=m_actual,
                         n_budget=n_budget, n_steps=n_steps, roi=name,
                         error=temporal_error(prob.grid, res.v, ref, roi))
                for name, roi in rois.items()]

    def sweep(self, method: Method, kappa: int, target_ms,
              rois: dict[str, RoiSpec]) -> list[ErrorRow]:
        rows: list[ErrorRow] = []
        for m in target_ms:
            rows.extend(self.errors_at(method, kappa, m, rois))
        return rows


def convergence_order(ms, errors, n_fit: int = 10) -> float:
    """Least-squares slope of log(error) against log(1/m), fitted over the
    n_fit largest resolutions."""
    ms = np.asarray(ms, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(ms) != len(errors) or len(ms) < 2:
        raise ValueError("need matching sweeps of length >= 2")
    idx = np.argsort(ms)[-n_fit:]
    x = np.log(1.0 / ms[idx])
    y = np.log(errors[idx])
    return float(np.polyfit(x, y, 1)[0])


def extract_eer(v: np.ndarray, payoff_grid: np.ndarray, strike: float,
                tol: float = 1e-4) -> np.ndarray:
    """Nodes where the value sits on the payoff: v - payoff <= tol*max(1, K)."""
    return (v - payoff_grid) <= tol * max(1.0, strike)


def bilinear_interp(grid: SpatialGrid, v: np.ndarray, s1: float, s2: float) -> float:
    """Bilinear interpolation of a grid function at one spot pair."""
    out = v
    for q, s in ((1, s1), (2, s2)):
        nodes = grid.axis(q).s
        j = int(np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, len(nodes) - 2))
        t = (s - nodes[j]) / (nodes[j + 1] - nodes[j])
        t = min(max(t, 0.0), 1.0)
        sl = out[j] if q == 1 else out[..., j]
        sr = out[j + 1] if q == 1 else out[..., j + 1]
        out = (1.0 - t) * sl + t * sr
    return float(out)


def default_spots(strike: float) -> list[tuple[float, float]]:
    levels = [round(0.9 * strike, 10), strike, round(1.1 * strike, 10)]
    return [(a, b) for b in levels for a in levels]


def value_table(set_name: str, payoff_kind: PayoffKind, *,
                interior_width: float = 0.40, dt: float = 0.01,
                spots: list[tuple[float, float]] | None = None,
                s_max_mult: float = 8.0
                ) -> tuple[list[tuple[float, float, float]], RunResult, Problem]:
    """Price at a list of spot pairs on a grid whose uniform-zone mesh width
    is about `interior_width` (in currency), stepped with the two-step
    Craig-Sneyd method at the given step size.

    Returns ([(s1, s2, value), ...], run_result, problem).
    """
    params, option = parameter_set(set_name, payoff_kind)
    strike = option.strike
    template = default_spec(strike, nu=1, s_max_mult=s_max_mult)
    nu = nu_for_interior_width(template, interior_width)
    problem = discretize_preset_grid(params, option, nu, s_max_mult)
    n_steps = round(option.maturity / dt)
    res = run(problem, MethodConfig(Method.MCS2_IT, n_steps=n_steps, kappa=2))
    if spots is None:
        spots = default_spots(strike)
    rows = [(s1, s2, bilinear_interp(problem.grid, res.v, s1, s2))
            for s1, s2 in spots]
    return rows, res, problem
