"""Time-stepping methods for the semidiscrete complementarity problem.

Eight production methods are provided.  Six combine IMEX/ADI splitting
schemes with an iterated multiplier splitting of the early-exercise
constraint (the IT(kappa) family); two use a penalty formulation instead.
The integral operator is always treated explicitly, so its matrix-vector
products dominate the cost and are counted by an instrumented wrapper.

All methods march a value surface from the payoff at t=0 to t=T in N'
steps, with the first two steps replaced by four half-steps of the damped
backward Euler variant to smooth the payoff kink.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .problem import Problem
from .solvers import (LineFactorization, StencilSolver, solve_lcp_psor,
                      solve_tridiag_lines)

__all__ = ["Method", "MethodConfig", "StepperState", "RunDiagnostics",
           "RunResult", "Stepper", "run", "imex_euler_pair", "GapReport",
           "PenaltyConvergenceError", "temporal_nodes"]

IT_METHODS = ("cnfi_it", "ietr_it", "cnab_it", "mcs_it", "mcs2_it", "sc2a_it",
              "befi_it")
PENALTY_METHODS = ("cnfi_p", "mcs_p", "befi_p")
TWO_STEP_METHODS = ("cnab_it", "mcs2_it", "sc2a_it")


class Method(str, Enum):
    CNFI_IT = "cnfi_it"
    IETR_IT = "ietr_it"
    CNAB_IT = "cnab_it"
    MCS_IT = "mcs_it"
    MCS2_IT = "mcs2_it"
    SC2A_IT = "sc2a_it"
    CNFI_P = "cnfi_p"
    MCS_P = "mcs_p"
    BEFI_IT = "befi_it"
    BEFI_P = "befi_p"
    IMEX_EULER_IT = "imex_euler_it"
    IMEX_EULER_LCP = "imex_euler_lcp"

    @property
    def is_penalty(self) -> bool:
        return self.value in PENALTY_METHODS

    @property
    def is_two_step(self) -> bool:
        return self.value in TWO_STEP_METHODS


# Adams coefficients of the two-step stabilizing-correction scheme: the
# explicit extrapolation weights for the split operator parts.
SC2A_B1 = (1.5, -0.5)


def sc2a_b0(theta: float) -> tuple[float, float]:
    return (1.5 - theta, theta - 0.5)


@dataclass(frozen=True)
class MethodConfig:
    """A method together with everything needed to run it."""

    method: Method
    n_steps: int
    kappa: int = 2
    theta: float | None = None          # None: standard value per method
    penalty_tol: float = 1e-7
    penalty_large: float = 1e7
    max_penalty_iter: int = 100
    temporal_grid: str | None = None    # "uniform" | "quadratic"; None: per method

    def __post_init__(self):
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.temporal_grid not in (None, "uniform", "quadratic"):
            raise ValueError("temporal_grid must be 'uniform' or 'quadratic'")

    @property
    def resolved_theta(self) -> float:
        if self.theta is not None:
            return self.theta
        if self.method in (Method.MCS_IT, Method.MCS2_IT, Method.MCS_P):
            return 1.0 / 3.0
        if self.method is Method.SC2A_IT:
            return 0.75
        return 0.5  # unused by the CN-type methods but harmless

    @property
    def resolved_temporal_grid(self) -> str:
        if self.temporal_grid is not None:
            return self.temporal_grid
        return "quadratic" if self.method is Method.CNFI_P else "uniform"


def temporal_nodes(cfg: MethodConfig, maturity: float) -> np.ndarray:
    n = cfg.n_steps
    if cfg.resolved_temporal_grid == "quadratic":
        return maturity * (np.arange(n + 1) / n) ** 2
    return maturity * np.arange(n + 1) / n


@dataclass
class StepperState:
    """State advanced by one step: the current value surface, the
    multiplier (IT methods), and the previous whole-step value."""

    v: np.ndarray
    lam: np.ndarray
    v_prev: np.ndarray | None = None
    n: int = 0


@dataclass
class RunDiagnostics:
    jump_matvecs: int = 0
    penalty_iters: list[int] = field(default_factory=list)
    min_excess: float = np.inf       # min over steps/nodes of v - payoff
    min_multiplier: float = np.inf
    wall_time: float = 0.0


@dataclass
class RunResult:
    v: np.ndarray
    lam: np.ndarray
    diagnostics: RunDiagnostics
    config: MethodConfig


class PenaltyConvergenceError(RuntimeError):
    pass


class Stepper:
    """Per-run context: operators, cached factorizations, instrumentation.

    `american=False` switches the early-exercise constraint off, in which
    case every method collapses to its underlying scheme for the
    unconstrained integro-differential equation (the multiplier stays zero
    and the projections are skipped).
    """

    def __init__(self, problem: Problem, cfg: MethodConfig, american: bool = True):
        self.problem = problem
        self.cfg = cfg
        self.ops = problem.ops
        self.v0 = problem.payoff_grid if american else None
        self.stencil = StencilSolver(problem.ops.ad, problem.shape)
        self._lines: dict[tuple[int, float], LineFactorization] = {}
        self.diag = RunDiagnostics()

    # -- instrumented kernels -------------------------------------------------

    def jump(self, u: np.ndarray) -> np.ndarray:
        self.diag.jump_matvecs += 1
        return self.problem.jump.apply(u)

    def line_solve(self, q: int, c: float, b: np.ndarray) -> np.ndarray:
        key = (q, c)
        fact = self._lines.get(key)
        if fact is None:
            op = self.ops.a1 if q == 1 else self.ops.a2
            fact = self._lines.setdefault(key, LineFactorization(op, c))
        return fact.solve(b)

    # -- multiplier splitting helpers -----------------------------------------

    def _lam_next(self, lam_prev, z, dt):
        if self.v0 is None:
            return np.zeros_like(lam_prev)
        return np.maximum(0.0, lam_prev + (self.v0 - z) / dt)

    def _project(self, z, lam_prev, dt):
        if self.v0 is None:
            return z
        return np.maximum(z - dt * lam_prev, self.v0)

    def _record(self, state: StepperState):
        if self.v0 is not None:
            excess = float((state.v - self.v0).min())
            if excess < self.diag.min_excess:
                self.diag.min_excess = excess
            lam_min = float(state.lam.min())
            if lam_min < self.diag.min_multiplier:
                self.diag.min_multiplier = lam_min

    # -- one-step IT methods ---------------------------------------------------

    def step_cnfi_it(self, state: StepperState, dt: float) -> StepperState:
        """Crank-Nicolson with fixed-point iteration on the integral part,
        interleaved with the multiplier projection in every iteration."""
        v, lam = state.v, state.lam
        jv = self.jump(v)
        base = v + 0.5 * dt * self.ops.apply_ad(v)
        zhat, lam_k = v, lam
        for k in range(1, self.cfg.kappa + 1):
            jz = jv if k == 1 else self.jump(zhat)
            z = self.stencil.solve(0.5 * dt, base + 0.5 * dt * (jz + jv) + dt * lam_k)
            zhat = self._project(z, lam_k, dt)
            lam_k = self._lam_next(lam_k, z, dt)
        return StepperState(v=zhat, lam=lam_k, v_prev=v, n=state.n + 1)

    def step_befi_it(self, state: StepperState, dt: float) -> StepperState:
        """Backward Euler analogue of step_cnfi_it; the damping method."""
        v, lam_k = state.v, state.lam
        zhat = v
        for _ in range(self.cfg.kappa):
            z = self.stencil.solve(dt, v + dt * self.jump(zhat) + dt * lam_k)
            zhat = self._project(z, lam_k, dt)
            lam_k = self._lam_next(lam_k, z, dt)
        return StepperState(v=zhat, lam=lam_k, v_prev=v, n=state.n + 1)

    def step_ietr_it(self, state: StepperState, dt: float) -> StepperState:
        """Implicit trapezoidal rule for the differential part, explicit
        trapezoidal rule for the integral part."""
        v, lam_k = state.v, state.lam
        jv = self.jump(v)
        adv = self.ops.apply_ad(v)
        base0 = v + dt * (adv + jv)
        z = v
        for _ in range(self.cfg.kappa):
            lam_prev = lam_k
            y0 = base0 + dt * lam_prev
            ybar0 = y0 + 0.5 * dt * self.jump(y0 - v)
            z = self.stencil.solve(0.5 * dt, ybar0 - 0.5 * dt * adv)
            lam_k = self._lam_next(lam_prev, z, dt)
        v_new = self._project(z, lam_prev, dt)
        return StepperState(v=v_new, lam=lam_k, v_prev=v, n=state.n + 1)

    def step_cnab_it(self, state: StepperState, dt: float) -> StepperState:
        """Crank-Nicolson for the differential part; the integral part is
        extrapolated from the two previous steps, so one product per step."""
        v, v_prev, lam_k = state.v, state.v_prev, state.lam
        jterm = 0.5 * dt * self.jump(3.0 * v - v_prev)
        base = v + 0.5 * dt * self.ops.apply_ad(v) + jterm
        z = v
        for _ in range(self.cfg.kappa):
            lam_prev = lam_k
            z = self.stencil.solve(0.5 * dt, base + dt * lam_prev)
            lam_k = self._lam_next(lam_prev, z, dt)
        v_new = self._project(z, lam_prev, dt)
        return StepperState(v=v_new, lam=lam_k, v_prev=v, n=state.n + 1)

    def step_mcs_it(self, state: StepperState, dt: float) -> StepperState:
        """Modified Craig-Sneyd splitting; mixed-derivative and integral
        parts handled by the explicit trapezoidal rule, one-directional
        stabilizing corrections solved implicitly."""
        cfg = self.cfg
        th = cfg.resolved_theta
        v, lam_k = state.v, state.lam
        jv = self.jump(v)
        adv = self.ops.apply_ad(v)
        a1v = self.ops.apply_a(1, v)
        a2v = self.ops.apply_a(2, v)
        base0 = v + dt * (adv + jv)
        z = v
        for _ in range(cfg.kappa):
            lam_prev = lam_k
            y0 = base0 + dt * lam_prev
            y1 = self.line_solve(1, th * dt, y0 - th * dt * a1v)
            y2 = self.line_solve(2, th * dt, y1 - th * dt * a2v)
            w = y2 - v
            jw = self.jump(w)
            yt0 = (y0 + th * dt * (self.ops.apply_mixed(w) + jw)
                   + (0.5 - th) * dt * (self.ops.apply_ad(w) + jw))
            yt1 = self.line_solve(1, th * dt, yt0 - th * dt * a1v)
            z = self.line_solve(2, th * dt, yt1 - th * dt * a2v)
            lam_k = self._lam_next(lam_prev, z, dt)
        v_new = self._project(z, lam_prev, dt)
        return StepperState(v=v_new, lam=lam_k, v_prev=v, n=state.n + 1)

    def step_mcs2_it(self, state: StepperState, dt: float) -> StepperState:
        """Craig-Sneyd variant with the integral part extrapolated from the
        two previous steps instead of iterated; one product per step."""
        cfg = self.cfg
        th = cfg.resolved_theta
        v, v_prev, lam_k = state.v, state.v_prev, state.lam
        jterm = 0.5 * dt * self.jump(3.0 * v - v_prev)
        adv = self.ops.apply_ad(v)
        a1v = self.ops.apply_a(1, v)
        a2v = self.ops.apply_a(2, v)
        base0 = v + dt * adv + jterm
        z = v
        for _ in range(cfg.kappa):
            lam_prev = lam_k
            y0 = base0 + dt * lam_prev
            y1 = self.line_solve(1, th * dt, y0 - th * dt * a1v)
            y2 = self.line_solve(2, th * dt, y1 - th * dt * a2v)
            w = y2 - v
            yt0 = y0 + th * dt * self.ops.apply_mixed(w) + (0.5 - th) * dt * self.ops.apply_ad(w)
            yt1 = self.line_solve(1, th * dt, yt0 - th * dt * a1v)
            z = self.line_solve(2, th * dt, yt1 - th * dt * a2v)
            lam_k = self._lam_next(lam_prev, z, dt)
        v_new = self._project(z, lam_prev, dt)
        return StepperState(v=v_new, lam=lam_k, v_prev=v, n=state.n + 1)

    def step_sc2a_it(self, state: StepperState, dt: float) -> StepperState:
        """Two-step stabilizing-correction scheme of Adams type: both the
        mixed-derivative and integral parts are extrapolated explicitly."""
        cfg = self.cfg
        th = cfg.resolved_theta
        b01, b02 = sc2a_b0(th)
        b11, b12 = SC2A_B1
        v, v_prev, lam_k = state.v, state.v_prev, state.lam
        u0 = b01 * v + b02 * v_prev
        u1 = b11 * v + b12 * v_prev
        a1v = self.ops.apply_a(1, v)
        a2v = self.ops.apply_a(2, v)
        base = (v + dt * (self.ops.apply_a(1, u0) + self.ops.apply_a(2, u0))
                + dt * (self.ops.apply_mixed(u1) + self.jump(u1)))
        z = v
        for _ in range(cfg.kappa):
            lam_prev = lam_k
            y0 = base + dt * lam_prev
            y1 = self.line_solve(1, th * dt, y0 - th * dt * a1v)
            z = self.line_solve(2, th * dt, y1 - th * dt * a2v)
            lam_k = self._lam_next(lam_prev, z, dt)
        v_new = self._project(z, lam_prev, dt)
        return StepperState(v=v_new, lam=lam_k, v_prev=v, n=state.n + 1)

    # -- penalty methods --------------------------------------------------------

    def _penalty_mask(self, z: np.ndarray) -> np.ndarray:
        if self.v0 is None:
            return np.zeros_like(z)
        return np.where(z < self.v0, self.cfg.penalty_large, 0.0)

    def _penalty_converged(self, z, z_prev) -> bool:
        num = np.abs(z - z_prev)
        den = np.maximum(1.0, np.abs(z))
        return float((num / den).max()) < self.cfg.penalty_tol

    def step_cnfi_p(self, state: StepperState, dt: float) -> StepperState:
        """Crank-Nicolson fixed-point iteration with a penalty term keeping
        the iterate above the payoff; iterated to a dynamic tolerance."""
        v = state.v
        jv = self.jump(v)
        base = v + 0.5 * dt * self.ops.apply_ad(v)
        z_prev = v
        for k in range(1, self.cfg.max_penalty_iter + 1):
            p = self._penalty_mask(z_prev)
            jz = jv if k == 1 else self.jump(z_prev)
            rhs = base + 0.5 * dt * (jz + jv)
            if self.v0 is not None:
                rhs = rhs + p * self.v0
            z = self.stencil.solve(0.5 * dt, rhs, extra_diag=p)
            if self._penalty_converged(z, z_prev):
                break
            z_prev = z
        else:
            raise PenaltyConvergenceError(
                f"penalty iteration exceeded {self.cfg.max_penalty_iter}")
        self.diag.penalty_iters.append(k)
        return StepperState(v=z, lam=np.zeros_like(z), v_prev=v, n=state.n + 1)

    def step_befi_p(self, state: StepperState, dt: float) -> StepperState:
        """Backward Euler analogue of step_cnfi_p; damping for the penalty
        methods."""
        v = state.v
        z_prev = v
        for k in range(1, self.cfg.max_penalty_iter + 1):
            p = self._penalty_mask(z_prev)
            rhs = v + dt * self.jump(z_prev)
            if self.v0 is not None:
                rhs = rhs + p * self.v0
            z = self.stencil.solve(dt, rhs, extra_diag=p)
            if self._penalty_converged(z, z_prev):
                break
            z_prev = z
        else:
            raise PenaltyConvergenceError(
                f"penalty iteration exceeded {self.cfg.max_penalty_iter}")
        self.diag.penalty_iters.append(k)
        return StepperState(v=z, lam=np.zeros_like(z), v_prev=v, n=state.n + 1)

    def step_mcs_p(self, state: StepperState, dt: float) -> StepperState:
        """Craig-Sneyd stage ladder run once, with the penalty iteration
        folded into the final one-directional implicit stage."""
        cfg = self.cfg
        th = cfg.resolved_theta
        v = state.v
        jv = self.jump(v)
        adv = self.ops.apply_ad(v)
        a1v = self.ops.apply_a(1, v)
        a2v = self.ops.apply_a(2, v)
        y0 = v + dt * (adv + jv)
        y1 = self.line_solve(1, th * dt, y0 - th * dt * a1v)
        y2 = self.line_solve(2, th * dt, y1 - th * dt * a2v)
        w = y2 - v
        jw = self.jump(w)
        yt0 = (y0 + th * dt * (self.ops.apply_mixed(w) + jw)
               + (0.5 - th) * dt * (self.ops.apply_ad(w) + jw))
        yt1 = self.line_solve(1, th * dt, yt0 - th * dt * a1v)

        rhs_base = yt1 - th * dt * a2v
        a2 = self.ops.a2
        lower = -th * dt * a2.lower[None, :]
        upper = -th * dt * a2.upper[None, :]
        diag0 = 1.0 - th * dt * a2.diag[None, :]
        z_prev = v
        for k in range(1, cfg.max_penalty_iter + 1):
            p = self._penalty_mask(z_prev)
            rhs = rhs_base + (p * self.v0 if self.v0 is not None else 0.0)
            z = solve_tridiag_lines(lower, diag0 + p, upper, rhs, axis=1)
            if self._penalty_converged(z, z_prev):
                break
            z_prev = z
        else:
            raise PenaltyConvergenceError(
                f"penalty iteration exceeded {cfg.max_penalty_iter}")
        self.diag.penalty_iters.append(k)
        return StepperState(v=z, lam=np.zeros_like(z), v_prev=v, n=state.n + 1)

    # -- the plain IMEX Euler pair ----------------------------------------------

    def step_imex_euler_it(self, state: StepperState, dt: float) -> StepperState:
        """One multiplier-split backward Euler step (no inner iteration)."""
        v, lam = state.v, state.lam
        z = self.stencil.solve(dt, v + dt * self.jump(v) + dt * lam)
        v_new = self._project(z, lam, dt)
        lam_new = self._lam_next(lam, z, dt)
        return StepperState(v=v_new, lam=lam_new, v_prev=v, n=state.n + 1)

    def step_imex_euler_lcp(self, state: StepperState, dt: float) -> StepperState:
        """The same step with the constraint enforced exactly through the
        linear complementarity problem, solved by projected SOR."""
        v = state.v
        rhs = v + dt * self.jump(v)
        lb = self.v0 if self.v0 is not None else np.full_like(v, -np.inf)
        v_new, lam_new = solve_lcp_psor(dt, self.ops.ad, rhs, lb)
        return StepperState(v=v_new, lam=lam_new, v_prev=v, n=state.n + 1)

    # -- dispatch -----------------------------------------------------------------

    _STEPS = {
        Method.CNFI_IT: step_cnfi_it,
        Method.IETR_IT: step_ietr_it,
        Method.CNAB_IT: step_cnab_it,
        Method.MCS_IT: step_mcs_it,
        Method.MCS2_IT: step_mcs2_it,
        Method.SC2A_IT: step_sc2a_it,
        Method.CNFI_P: step_cnfi_p,
        Method.MCS_P: step_mcs_p,
        Method.BEFI_IT: step_befi_it,
        Method.BEFI_P: step_befi_p,
        Method.IMEX_EULER_IT: step_imex_euler_it,
        Method.IMEX_EULER_LCP: step_imex_euler_lcp,
    }

    def step(self, state: StepperState, dt: float) -> StepperState:
        new = self._STEPS[self.cfg.method](self, state, dt)
        self._record(new)
        return new

    def step_damping(self, state: StepperState, dt: float) -> StepperState:
        """Half of one damping step: strongly damped backward Euler with the
        same constraint treatment as the main method."""
        if self.cfg.method.is_penalty:
            new = self.step_befi_p(state, dt)
        else:
            new = self.step_befi_it(state, dt)
        self._record(new)
        return new

    def initial_state(self) -> StepperState:
        v0 = self.problem.payoff_grid
        return StepperState(v=v0.copy(), lam=np.zeros_like(v0), v_prev=None, n=0)


def run(problem: Problem, cfg: MethodConfig, american: bool = True) -> RunResult:
    """March the configured method over [0, T].

    The first two steps are replaced by four damping half-steps; for
    two-step methods the whole-step values at the first two grid times
    serve as the starting history.
    """
    t_start = time.perf_counter()
    stepper = Stepper(problem, cfg, american=american)
    times = temporal_nodes(cfg, problem.option.maturity)
    state = stepper.initial_state()

    n_damped = min(2, cfg.n_steps)
    history = state.v  # value at the previous whole step
    for n in range(1, n_damped + 1):
        dtn = times[n] - times[n - 1]
        prev_whole = state.v
        state = stepper.step_damping(state, 0.5 * dtn)
        state = stepper.step_damping(state, 0.5 * dtn)
        history = prev_whole
        state = replace(state, v_prev=history, n=n)

    for n in range(n_damped + 1, cfg.n_steps + 1):
        dtn = times[n] - times[n - 1]
        state = stepper.step(state, dtn)

    stepper.diag.wall_time = time.perf_counter() - t_start
    return RunResult(v=state.v, lam=state.lam, diagnostics=stepper.diag, config=cfg)


@dataclass
class GapReport:
    max_gap: float
    per_step: np.ndarray
    n_steps: int


def imex_euler_pair(problem: Problem, n_steps: int) -> GapReport:
    """Run the multiplier-split IMEX Euler method and the exact-LCP IMEX
    Euler method side by side and report the maximum distance between the
    two trajectories.  No damping; both start from the payoff."""
    cfg_it = MethodConfig(Method.IMEX_EULER_IT, n_steps=n_steps, kappa=1)
    cfg_lcp = MethodConfig(Method.IMEX_EULER_LCP, n_steps=n_steps, kappa=1)
    st_it = Stepper(problem, cfg_it)
    st_lcp = Stepper(problem, cfg_lcp)
    s_it = st_it.initial_state()
    s_lcp = st_lcp.initial_state()
    dt = problem.option.maturity / n_steps
    gaps = np.empty(n_steps)
    for n in range(n_steps):
        s_it = st_it.step(s_it, dt)
        s_lcp = st_lcp.step(s_lcp, dt)
        gaps[n] = float(np.abs(s_it.v - s_lcp.v).max())
    return GapReport(max_gap=float(gaps.max()), per_step=gaps, n_steps=n_steps)
