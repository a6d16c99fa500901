"""Forward solver: first-order upwind transport + implicit Euler source, Godunov splitting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _core
from .core import (
    BinaryControl,
    ContinuousControl,
    RelaxedControl,
    SpaceGrid,
    StateTrajectory,
    SystemSpec,
    TimeGrid,
)


class NumericalError(RuntimeError):
    pass


class UnstableStepError(NumericalError):
    pass


class NewtonError(NumericalError):
    def __init__(self, msg, cell=None):
        super().__init__(msg)
        self.cell = cell


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.5
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    boundary_kind: str = "coupled_G"
    use_kernel: bool = True

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("cfl must lie in (0, 1]")
        if self.boundary_kind not in ("coupled_G", "periodic"):
            raise ValueError(f"unknown boundary kind {self.boundary_kind!r}")
        if self.newton_tol <= 0 or self.newton_max_iter < 1:
            raise ValueError("invalid Newton settings")


def max_speed(spec: SystemSpec, sgrid: SpaceGrid) -> float:
    return float(np.max(np.abs(spec.lam(sgrid.centers))))


def derive_time_grid(spec: SystemSpec, sgrid: SpaceGrid, cfl: float = 0.5, multiple_of: int = 1) -> TimeGrid:
    """CFL-limited time grid; ``N_t`` is rounded up to a multiple of ``multiple_of``."""
    if not 0.0 < cfl <= 1.0:
        raise ValueError("cfl must lie in (0, 1]")
    smax = max_speed(spec, sgrid)
    if smax == 0.0:
        raise ValueError("degenerate speeds")
    dt = cfl * sgrid.dx / smax
    n = max(1, math.ceil(spec.T / dt * (1.0 - 1e-12)))
    n = multiple_of * math.ceil(n / multiple_of)
    return TimeGrid(spec.T, n)


def face_speeds(spec: SystemSpec, sgrid: SpaceGrid) -> np.ndarray:
    """Speeds at the N_x + 1 cell faces: mean of adjacent centers, endpoint values at the ends."""
    lam_c = np.asarray(spec.lam(sgrid.centers), dtype=float)
    ends = np.asarray(spec.lam(np.array([0.0, sgrid.L])), dtype=float)
    faces = np.empty((sgrid.N_x + 1, spec.n))
    faces[1:-1] = 0.5 * (lam_c[1:] + lam_c[:-1])
    faces[0], faces[-1] = ends[0], ends[1]
    return faces


def apply_boundary(y: np.ndarray, spec: SystemSpec, t: float, boundary_kind: str = "coupled_G"):
    """Inflow ghost values ``(left, right)`` from the outflow traces.

    ``left`` carries ``y^+(t, 0)`` in its last ``n - r`` entries and ``right``
    carries ``y^-(t, L)`` in its first ``r`` entries; the other entries are
    copies of the adjacent cells and never enter the upwind update.
    """
    r = spec.r
    left, right = y[0].copy(), y[-1].copy()
    if boundary_kind == "periodic":
        right[:r] = y[0, :r]
        left[r:] = y[-1, r:]
        return left, right
    out = np.concatenate([y[0, :r], y[-1, r:]])
    inflow = spec.boundary_matrix @ out + spec.d(t)
    right[:r] = inflow[:r]
    left[r:] = inflow[r:]
    return left, right


def transport_step(y, spec: SystemSpec, sgrid: SpaceGrid, dt: float, ghosts, speeds=None) -> np.ndarray:
    if speeds is None:
        speeds = face_speeds(spec, sgrid)
    ratio = dt / sgrid.dx
    if ratio * np.max(np.abs(speeds)) > 1.0 + 1e-12:
        raise UnstableStepError("unstable step requested")
    left, right = ghosts
    ext = np.vstack([left, y, right])
    r = spec.r
    out = np.empty_like(y)
    # left-moving: y_k + ratio*|lam_{k+1/2}|*(y_{k+1} - y_k)
    out[:, :r] = y[:, :r] - ratio * speeds[1:, :r] * (ext[2:, :r] - y[:, :r])
    # right-moving: y_k - ratio*lam_{k-1/2}*(y_k - y_{k-1})
    out[:, r:] = y[:, r:] - ratio * speeds[:-1, r:] * (y[:, r:] - ext[:-2, r:])
    return out


def source_step_implicit(y, spec: SystemSpec, u, beta_row, dt: float, config: Optional[SolverConfig] = None) -> np.ndarray:
    """Solve ``z = y + dt * sum_j beta_j f(z, u, v^j)`` cell by cell."""
    config = config or SolverConfig()
    beta_row = np.asarray(beta_row, dtype=float)
    if spec.implicit_source is not None:
        return spec.implicit_source(y, u, beta_row, dt)
    z = np.array(y, dtype=float, copy=True)
    eye = np.eye(spec.n)
    for it in range(config.newton_max_iter + 1):
        f = spec.aggregated_source(z, u, beta_row)
        F = z - y - dt * f
        scale = 1.0 + np.max(np.abs(z), axis=-1) + dt * np.max(np.abs(f), axis=-1)
        bad = np.max(np.abs(F), axis=-1) > config.newton_tol * scale
        if not np.any(bad):
            return z
        if it == config.newton_max_iter:
            break
        J = eye - dt * spec.aggregated_jacobian(z[bad], u, beta_row)
        z[bad] -= np.linalg.solve(J, F[bad][..., None])[..., 0]
    cell = int(np.flatnonzero(bad)[0])
    raise NewtonError(f"Newton iteration did not converge in cell {cell}", cell=cell)


def initial_state(spec: SystemSpec, sgrid: SpaceGrid) -> np.ndarray:
    y0 = np.asarray(spec.initial_data(sgrid.centers), dtype=float)
    return np.ascontiguousarray(y0.reshape(sgrid.N_x, spec.n))


def _step_controls(beta, tgrid: TimeGrid) -> np.ndarray:
    if isinstance(beta, BinaryControl):
        beta = beta.to_relaxed()
    return beta.on_grid(tgrid).values


def _kernel_applies(spec: SystemSpec, config: SolverConfig, u) -> bool:
    return spec.jinxin is not None and config.use_kernel and u is None


def solve_forward(
    spec: SystemSpec,
    beta: RelaxedControl | BinaryControl,
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    config: Optional[SolverConfig] = None,
    u: Optional[ContinuousControl] = None,
) -> StateTrajectory:
    config = config or SolverConfig()
    rows = _step_controls(beta, tgrid)
    if rows.shape[1] != spec.M:
        raise ValueError("control has the wrong number of modes")
    dt = tgrid.dt
    y = initial_state(spec, sgrid)

    if _kernel_applies(spec, config, u):
        a, kappa = spec.jinxin.a, spec.jinxin.kappa
        nu = a * dt / sgrid.dx
        if nu > 1.0 + 1e-12:
            raise UnstableStepError("unstable step requested")
        w = np.ascontiguousarray(0.5 * (rows[:, 0] - rows[:, 1]))
        s = np.ascontiguousarray(rows[:, 0] + rows[:, 1])
        data = np.asarray(_core.jinxin_forward(y, w, s, nu, dt / kappa, a))
        if not np.all(np.isfinite(data)):
            step = int(np.argmax(~np.all(np.isfinite(data), axis=(1, 2))))
            raise NumericalError(f"non-finite state at step {step}")
        return StateTrajectory(
            tgrid, sgrid, data, solver_tag=f"fv-jinxin-{_core.BACKEND}", meta={"a": a, "kappa": kappa}
        )

    speeds = face_speeds(spec, sgrid)
    data = np.empty((tgrid.N_t + 1, sgrid.N_x, spec.n))
    data[0] = y
    for n in range(tgrid.N_t):
        t = n * dt
        uval = None if u is None else u.at_step(t + 0.5 * dt)
        ghosts = apply_boundary(y, spec, t, config.boundary_kind)
        y = transport_step(y, spec, sgrid, dt, ghosts, speeds)
        y = source_step_implicit(y, spec, uval, rows[n], dt, config)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite state at step {n + 1}")
        data[n + 1] = y
    meta = {} if spec.jinxin is None else {"a": spec.jinxin.a, "kappa": spec.jinxin.kappa}
    return StateTrajectory(tgrid, sgrid, data, solver_tag="fv-generic", meta=meta)
