"""Projected gradient descent on relaxed controls, relax-round studies and gap studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .adjoint import ReducedCost, tracking_cost
from .core import (
    BinaryControl,
    RelaxedControl,
    StateTrajectory,
    TimeGrid,
    _project_rows,
    l1_time_sup_distance,
)
from .fvsolver import solve_forward
from .problems import Problem
from .rounding import integrated_deviation, sum_up_rounding

DEFAULT_DT_SEQUENCE = (1.0, 0.5, 0.25, 0.125, 0.0625)


@dataclass(frozen=True)
class OptimizeConfig:
    max_iters: int = 500
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    stationarity_tol: float = 1e-8
    initial_beta: Optional[float] = None  # first-mode weight; None -> 1/M

    def __post_init__(self):
        if self.max_iters < 0 or self.max_backtracks < 1:
            raise ValueError("iteration counts must be nonnegative")
        if not 0 < self.backtrack < 1 or not 0 < self.c1 < 1:
            raise ValueError("line-search factors must lie in (0, 1)")
        if self.stationarity_tol <= 0:
            raise ValueError("stationarity_tol must be positive")


@dataclass
class OptimizeResult:
    beta: RelaxedControl
    J: float
    log: list  # (iter, J, step_size, pg_norm)
    status: str  # "converged" | "max_iters" | "stalled"
    iterations: int


def _pg_norm(rows, grad_rows):
    return float(np.linalg.norm(rows - _project_rows(rows - grad_rows)) / math.sqrt(rows.shape[0]))


def _bb_step(ds, dg, fallback, lo=1e-10, hi=1e10):
    """Barzilai-Borwein trial step, safeguarded; the line search still enforces descent."""
    sy = float(np.sum(ds * dg))
    if sy <= 0.0:
        return fallback
    return min(max(float(np.sum(ds * ds)) / sy, lo), hi)


def optimize_relaxed(problem: Problem, config: Optional[OptimizeConfig] = None, objective=None) -> OptimizeResult:
    """Projected gradient with Armijo backtracking along the projection arc.

    Accepted steps satisfy ``J(b+) <= J(b) - c1 * s * ||(b - b+)/s||^2`` in the
    dt-weighted L2 norm of the control space.
    """
    config = config or OptimizeConfig()
    J = objective or ReducedCost(problem)
    grid = problem.control_grid
    M = problem.spec.M
    b0 = 1.0 / M if config.initial_beta is None else config.initial_beta
    rows = RelaxedControl.from_scalar(grid, b0).values.copy() if M == 2 else np.full((grid.N_t, M), 1.0 / M)
    dt = grid.dt

    f, g = J.value_and_gradient(rows)
    grad = g.rows()
    pg = _pg_norm(rows, grad)
    log = [(0, f, 0.0, pg)]
    gmax = float(np.max(np.abs(grad)))
    step = 1.0 / gmax if gmax > 0 else 1.0
    status = "max_iters"
    it = 0
    while True:
        if pg <= config.stationarity_tol:
            status = "converged"
            break
        if it >= config.max_iters:
            break
        accepted = False
        s = step
        for _ in range(config.max_backtracks):
            trial = _project_rows(rows - s * grad)
            d = rows - trial
            dnorm2 = dt * float(np.sum(d * d))
            if dnorm2 == 0.0:
                break
            ft = J(trial)
            if ft <= f - config.c1 * dnorm2 / s:
                accepted = True
                break
            s *= config.backtrack
        if not accepted:
            status = "stalled"
            break
        it += 1
        prev_rows, prev_grad = rows, grad
        rows = trial
        f, g = J.value_and_gradient(rows)
        grad = g.rows()
        pg = _pg_norm(rows, grad)
        log.append((it, f, s, pg))
        step = _bb_step(rows - prev_rows, grad - prev_grad, fallback=2.0 * s)
    return OptimizeResult(RelaxedControl(grid, rows), f, log, status, it)


def bang_bang_fraction(beta: RelaxedControl, tol: float = 0.05) -> float:
    b = beta.values[:, 0]
    return float(np.mean((b <= tol) | (b >= 1.0 - tol)))


# --------------------------------------------------------------------------- #
# Relax-round study
# --------------------------------------------------------------------------- #


@dataclass
class StudyRow:
    k: int
    dt: float
    epsilon: float
    J_v: float
    abs_gap: float
    rel_gap: float

    def as_dict(self):
        return {f: getattr(self, f) for f in ("k", "dt", "epsilon", "J_v", "abs_gap", "rel_gap")}


@dataclass
class RelaxRoundReport:
    J_star: float
    beta_star: RelaxedControl
    rows: list
    alphas: list
    final_states: list = field(default_factory=list)
    optimize: Optional[OptimizeResult] = None

    def check_bounds(self) -> bool:
        M = self.beta_star.M
        return all(r.epsilon <= (M - 1) * r.dt * (1 + 1e-12) for r in self.rows)


def _evaluate_binary(problem: Problem, alpha: BinaryControl) -> tuple[float, StateTrajectory]:
    traj = solve_forward(problem.spec, alpha, problem.tgrid, problem.sgrid, problem.solver)
    return tracking_cost(traj, problem.cost), traj


def relax_round(problem: Problem, beta_star: RelaxedControl, J_star: float, dt_sequence: Sequence[float]) -> RelaxRoundReport:
    rows, alphas, states = [], [], []
    for k, dtk in enumerate(dt_sequence, start=1):
        grid = TimeGrid.from_dt(problem.spec.T, dtk)
        rep = sum_up_rounding(beta_star, grid)
        Jv, traj = _evaluate_binary(problem, rep.binary)
        gap = abs(J_star - Jv)
        rows.append(StudyRow(k, dtk, rep.deviation, Jv, gap, gap / max(J_star, 1e-6)))
        alphas.append(rep.binary)
        states.append(traj.final)
    return RelaxRoundReport(J_star, beta_star, rows, alphas, states)


def relax_round_study(
    problem: Problem,
    dt_sequence: Sequence[float] = DEFAULT_DT_SEQUENCE,
    config: Optional[OptimizeConfig] = None,
) -> RelaxRoundReport:
    """Optimize the relaxed problem once, then round onto each grid and re-simulate."""
    res = optimize_relaxed(problem, config)
    report = relax_round(problem, res.beta, res.J, dt_sequence)
    report.optimize = res
    return report


# --------------------------------------------------------------------------- #
# Gap study
# --------------------------------------------------------------------------- #


@dataclass
class GapRow:
    dt: float
    epsilon: float
    distance: float
    ratio: float


@dataclass
class GapStudyReport:
    rows: list

    @property
    def max_ratio(self) -> float:
        vals = [r.ratio for r in self.rows if r.epsilon > 0]
        return max(vals) if vals else 0.0

    @property
    def decay(self) -> float:
        """Finest-level distance over coarsest-level distance (rounded levels only)."""
        lv = [r for r in self.rows if r.dt > 0]
        return lv[-1].distance / lv[0].distance if lv and lv[0].distance > 0 else 0.0


def gap_study(
    problem: Problem,
    beta: RelaxedControl,
    dt_sequence: Sequence[float],
    u=None,
    include_identity: bool = False,
) -> GapStudyReport:
    """Distance between relaxed and rounded trajectories against the integrated deviation."""
    spec, tg, sg, cfg = problem.spec, problem.tgrid, problem.sgrid, problem.solver
    y_ref = solve_forward(spec, beta, tg, sg, cfg, u=u)
    rows = []
    if include_identity:
        D = l1_time_sup_distance(y_ref, solve_forward(spec, beta, tg, sg, cfg, u=u))
        rows.append(GapRow(0.0, integrated_deviation(beta, beta), D, 0.0 if D == 0 else math.inf))
    for dtk in dt_sequence:
        rep = sum_up_rounding(beta, TimeGrid.from_dt(spec.T, dtk))
        D = l1_time_sup_distance(y_ref, solve_forward(spec, rep.binary, tg, sg, cfg, u=u))
        eps = rep.deviation
        ratio = D / eps if eps > 0 else (0.0 if D == 0 else math.inf)
        rows.append(GapRow(dtk, eps, D, ratio))
    return GapStudyReport(rows)


def smooth_beta(grid: TimeGrid, mean: float = 0.5, amplitude: float = 0.4, periods: float = 1.0) -> RelaxedControl:
    """First-mode weight ``mean + amplitude * sin(2 pi periods t / T)`` sampled at interval midpoints."""
    mid = grid.nodes[:-1] + 0.5 * grid.dt
    b = mean + amplitude * np.sin(2.0 * np.pi * periods * mid / grid.T)
    return RelaxedControl.from_scalar(grid, np.clip(b, 0.0, 1.0))
