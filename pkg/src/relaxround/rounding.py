"""Sum-up rounding of relaxed mode weights to binary mode schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BinaryControl, GridMismatchError, RelaxedControl, SystemSpec, TimeGrid


@dataclass(frozen=True)
class RoundingReport:
    binary: BinaryControl
    deviation: float
    bound: float
    grid: TimeGrid


def _check_nested(a: TimeGrid, b: TimeGrid) -> None:
    if not math.isclose(a.T, b.T, rel_tol=1e-12):
        raise GridMismatchError("grid mismatch")
    if a.N_t % b.N_t and b.N_t % a.N_t:
        raise GridMismatchError("grid mismatch")


def sum_up_rounding(beta: RelaxedControl, target_grid: TimeGrid) -> RoundingReport:
    """Round ``beta`` onto ``target_grid``.

    On each target interval the mode with the largest accumulated deficit
    ``int_0^{t_{k+1}} beta_j - sum_{l<k} alpha_{j,l} dt`` is activated; ties go
    to the smallest mode index.
    """
    _check_nested(beta.grid, target_grid)
    integrals = beta.on_grid(target_grid).integrals()
    dt = target_grid.dt
    M = beta.M
    used = np.zeros(M)
    modes = np.empty(target_grid.N_t, dtype=np.int64)
    for k in range(target_grid.N_t):
        j = int(np.argmax(integrals[k + 1] - used))
        modes[k] = j
        used[j] += dt
    binary = BinaryControl(target_grid, modes, M)
    return RoundingReport(
        binary=binary,
        deviation=integrated_deviation(beta, binary),
        bound=(M - 1) * dt,
        grid=target_grid,
    )


def _running_integral(values: np.ndarray, grid: TimeGrid, t: np.ndarray) -> np.ndarray:
    cum = np.zeros((grid.N_t + 1, values.shape[1]))
    np.cumsum(values * grid.dt, axis=0, out=cum[1:])
    k = np.clip(np.floor(t / grid.dt).astype(np.int64), 0, grid.N_t - 1)
    return cum[k] + values[k] * (t - k * grid.dt)[:, None]


def integrated_deviation(beta: RelaxedControl, alpha: BinaryControl | RelaxedControl) -> float:
    """Exact ``max_j sup_t |int_0^t beta_j - alpha_j ds|`` for piecewise-constant controls."""
    other = alpha.to_relaxed() if isinstance(alpha, BinaryControl) else alpha
    if not math.isclose(beta.grid.T, other.grid.T, rel_tol=1e-12):
        raise GridMismatchError("horizon mismatch")
    if beta.M != other.M:
        raise ValueError("mode count mismatch")
    # the running difference is piecewise linear, so breakpoints suffice
    t = np.union1d(beta.grid.nodes, other.grid.nodes)
    diff = _running_integral(beta.values, beta.grid, t) - _running_integral(
        other.values, other.grid, t
    )
    return float(np.max(np.abs(diff)))


@dataclass(frozen=True)
class ModeSchedule:
    grid: TimeGrid
    values: tuple


def mode_sequence_to_v(alpha: BinaryControl, spec: SystemSpec | Sequence) -> ModeSchedule:
    modes = spec.modes if isinstance(spec, SystemSpec) else spec
    return ModeSchedule(alpha.grid, tuple(modes[j] for j in alpha.active_mode))


def v_to_mode_sequence(schedule: ModeSchedule, spec: SystemSpec | Sequence) -> BinaryControl:
    modes = list(spec.modes if isinstance(spec, SystemSpec) else spec)
    idx = [modes.index(v) for v in schedule.values]
    return BinaryControl(schedule.grid, np.asarray(idx), len(modes))
