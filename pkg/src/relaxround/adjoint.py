"""Tracking cost, adjoint sweep and reduced gradient for the Jin-Xin flux-switching problem.

The adjoint sweep is the exact transpose of the forward splitting scheme, so it
is a mirrored discretization of

    -p_t - a^2 q_x = q (2 beta - 1) eta / kappa,    -q_t - p_x = -q / kappa,
    p(T) = -(eta(T) - eta_ref),  q(T) = 0,          periodic in x,

with upwinding along the reversed characteristic speeds and implicit Euler on
the relaxation terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _core
from .core import (
    BinaryControl,
    CostSpec,
    GridMismatchError,
    RelaxedControl,
    SpaceGrid,
    StateTrajectory,
    TimeGrid,
    refinement_ratio,
    trapezoid_periodic,
)
from .fvsolver import SolverConfig, solve_forward
from .problems import Problem, eta_weights


def observed(state: StateTrajectory, cost: CostSpec) -> np.ndarray:
    """The tracked scalar field ``observation . y`` at every time level."""
    return state.data @ np.asarray(cost.observation, dtype=float)


def tracking_cost(state: StateTrajectory, cost: CostSpec) -> float:
    """``1/2 * int (eta(T) - eta_ref)^2 dx`` by the periodic trapezoidal rule."""
    target = np.asarray(cost.target, dtype=float)
    if target.shape != (state.sgrid.N_x,):
        raise GridMismatchError("grid mismatch: target not sampled on the state grid")
    eta = state.final @ np.asarray(cost.observation, dtype=float)
    return 0.5 * trapezoid_periodic((eta - target) ** 2, state.sgrid.dx)


def terminal_cost(state: StateTrajectory, cost: CostSpec) -> float:
    if cost.density is None:
        return tracking_cost(state, cost)
    return trapezoid_periodic(np.asarray(cost.density(state.final)), state.sgrid.dx)


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    tgrid: TimeGrid
    sgrid: SpaceGrid
    data: np.ndarray  # (N_t+1, N_x, 2): p, q

    @property
    def p(self) -> np.ndarray:
        return self.data[..., 0]

    @property
    def q(self) -> np.ndarray:
        return self.data[..., 1]


@dataclass(frozen=True, eq=False)
class GradientVector:
    """L2(0, T) representative of the derivative w.r.t. the first-mode weight.

    ``values[k]`` is the time average over control interval ``k``; directional
    derivatives are ``dt * sum(values * d)``.
    """

    grid: TimeGrid
    values: np.ndarray

    def directional(self, direction) -> float:
        d = np.asarray(direction, dtype=float)
        if d.ndim == 2:
            d = d[:, 0]
        return float(self.grid.dt * np.dot(self.values, d))

    def rows(self) -> np.ndarray:
        """Gradient in full two-mode row space, tangent to the simplex."""
        return np.column_stack([0.5 * self.values, -0.5 * self.values])


def _step_rows(beta, tgrid):
    if isinstance(beta, BinaryControl):
        beta = beta.to_relaxed()
    return beta.on_grid(tgrid).values


def solve_adjoint(
    state: StateTrajectory,
    beta: RelaxedControl | BinaryControl,
    cost: CostSpec,
    spec,
    config: Optional[SolverConfig] = None,
) -> AdjointTrajectory:
    if spec.jinxin is None:
        raise ValueError("adjoint is only available for the Jin-Xin flux-switching system")
    tgrid, sgrid = state.tgrid, state.sgrid
    target = np.asarray(cost.target, dtype=float)
    if target.shape != (sgrid.N_x,) or state.n != 2:
        raise GridMismatchError("grid mismatch")
    rows = _step_rows(beta, tgrid)
    a, kappa = spec.jinxin.a, spec.jinxin.kappa
    dt, dx = tgrid.dt, sgrid.dx
    w_eta = eta_weights(a)
    resid = state.final @ w_eta - target
    mu_final = np.ascontiguousarray(dx * resid[:, None] * w_eta[None, :])
    w = np.ascontiguousarray(0.5 * (rows[:, 0] - rows[:, 1]))
    s = np.ascontiguousarray(rows[:, 0] + rows[:, 1])
    mu = np.asarray(
        _core.jinxin_adjoint(
            np.ascontiguousarray(state.data), w, s, a * dt / dx, dt / kappa, a, mu_final
        )
    )
    # duals of (eta, xi) are a*(mu1 - mu0) and mu0 + mu1; the Lagrangian sign flips them
    data = np.empty_like(mu)
    data[..., 0] = -a * (mu[..., 1] - mu[..., 0]) / dx
    data[..., 1] = -(mu[..., 0] + mu[..., 1]) / dx
    data[-1, :, 0] = -resid
    data[-1, :, 1] = 0.0
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite adjoint state")
    return AdjointTrajectory(tgrid, sgrid, data)


def reduced_gradient(
    state: StateTrajectory,
    adjoint: AdjointTrajectory,
    kappa: float,
    control_grid: Optional[TimeGrid] = None,
    a: Optional[float] = None,
) -> GradientVector:
    """Per-interval time average of ``-int q eta^2 / kappa dx``.

    The implicit relaxation step contributes the factor ``1 / (1 + dt/kappa)``
    and pairs ``q`` with ``eta`` at the end of each solver step.
    """
    if state.tgrid != adjoint.tgrid or state.sgrid != adjoint.sgrid:
        raise GridMismatchError("grid mismatch")
    tgrid = state.tgrid
    if a is None:
        a = float(state.meta.get("a", np.nan))
    w_eta = eta_weights(a)
    eta = state.data[1:] @ w_eta
    q = adjoint.q[1:]
    c = tgrid.dt / kappa
    per_step = -state.sgrid.dx * np.sum(q * eta * eta, axis=1) / (kappa * (1.0 + c))
    control_grid = control_grid or tgrid
    k = refinement_ratio(tgrid, control_grid)
    values = per_step.reshape(control_grid.N_t, k).mean(axis=1)
    return GradientVector(control_grid, values)


class ReducedCost:
    """``beta -> J(eta(beta))`` for a flux-switching problem, with its adjoint gradient."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.evaluations = 0

    def _control(self, beta) -> RelaxedControl:
        if isinstance(beta, RelaxedControl):
            return beta
        if isinstance(beta, BinaryControl):
            return beta.to_relaxed()
        b = np.asarray(beta, dtype=float)
        if b.ndim == 1:
            return RelaxedControl.from_scalar(self.problem.control_grid, b)
        return RelaxedControl(self.problem.control_grid, b)

    def state(self, beta) -> StateTrajectory:
        p = self.problem
        return solve_forward(p.spec, self._control(beta), p.tgrid, p.sgrid, p.solver)

    def __call__(self, beta) -> float:
        self.evaluations += 1
        return tracking_cost(self.state(beta), self.problem.cost)

    def value_and_gradient(self, beta):
        p = self.problem
        control = self._control(beta)
        traj = self.state(control)
        self.evaluations += 1
        adj = solve_adjoint(traj, control, p.cost, p.spec, p.solver)
        grad = reduced_gradient(traj, adj, p.kappa, control.grid, a=p.a)
        return tracking_cost(traj, p.cost), grad


def fd_gradient_oracle(objective: Callable, beta, direction, h: float = 1e-5) -> float:
    """Central difference ``(J(beta + h d) - J(beta - h d)) / 2h``.

    ``beta`` and ``direction`` are either first-mode weight vectors or full
    row matrices; the perturbed points must stay feasible.
    """
    b = np.asarray(beta, dtype=float)
    d = np.asarray(direction, dtype=float)
    if b.shape != d.shape:
        raise ValueError("direction shape mismatch")
    if not np.any(d):
        return 0.0
    for sgn in (1.0, -1.0):
        pt = b + sgn * h * d
        if np.any(pt < 0.0) or np.any(pt > 1.0):
            raise ValueError("infeasible perturbation")
        if pt.ndim == 2 and np.any(np.abs(pt.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("infeasible perturbation")
    return (objective(b + h * d) - objective(b - h * d)) / (2.0 * h)


def gradient_selftest(problem: Problem, n_directions: int = 3, seed: int = 0, h: float = 1e-5) -> dict:
    """Compare adjoint directional derivatives with central differences.

    Run before optimizing to catch sign errors in the adjoint chain.
    """
    rng = np.random.default_rng(seed)
    J = ReducedCost(problem)
    nc = problem.control_grid.N_t
    beta = rng.uniform(0.2, 0.8, nc)
    _, grad = J.value_and_gradient(beta)
    rows = []
    for _ in range(n_directions):
        d = rng.uniform(-1.0, 1.0, nc)
        adj = grad.directional(d)
        fd = fd_gradient_oracle(J, beta, d, h)
        rows.append({"adjoint": adj, "fd": fd, "rel_err": abs(adj - fd) / max(1.0, abs(fd))})
    worst = max(r["rel_err"] for r in rows)
    sign_ok = all(np.sign(r["adjoint"]) == np.sign(r["fd"]) or abs(r["fd"]) < 1e-12 for r in rows)
    return {"ok": bool(worst <= 1e-3 and sign_ok), "max_rel_err": worst, "checks": rows}
