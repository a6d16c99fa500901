"""Problem data model: system description, grids, controls, trajectories, norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ROW_SUM_TOL = 1e-12


class GridMismatchError(ValueError):
    pass


# --------------------------------------------------------------------------- #
# System description
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class SystemSpec:
    """Diagonal semilinear hyperbolic control system on [0, L] x [0, T].

    ``lam(x)`` returns the characteristic speeds with shape ``x.shape + (n,)``.
    The first ``r`` components travel left, the remaining ones travel right.

    ``source(y, u, j)`` is vectorized over leading axes of ``y`` (shape ``(..., n)``)
    and returns the right-hand side for mode index ``j`` (0-based).
    ``source_jacobian(y, u, j)`` returns ``(..., n, n)``; when it is ``None`` the
    implicit source step falls back to a finite-difference Jacobian.

    ``boundary_matrix`` is the full n x n coupling matrix acting on the outflow
    traces ``(y^-(t, 0), y^+(t, L))`` and producing the inflow traces
    ``(y^-(t, L), y^+(t, 0))``.
    """

    n: int
    r: int
    lam: Callable[[np.ndarray], np.ndarray]
    modes: Sequence
    source: Callable[[np.ndarray, object, int], np.ndarray]
    boundary_matrix: np.ndarray
    initial_data: Callable[[np.ndarray], np.ndarray]
    L: float
    T: float
    source_jacobian: Optional[Callable[[np.ndarray, object, int], np.ndarray]] = None
    boundary_data: Optional[Callable[[float], np.ndarray]] = None
    time_breakpoints: tuple = ()
    space_breakpoints: tuple = ()
    lipschitz_lambda: float = 0.0
    name: str = "system"
    # closed-form implicit source solver: (y, u, beta_row, dt) -> y_new
    implicit_source: Optional[Callable] = None
    # parameters for the compiled Jin-Xin kernel; None for general systems
    jinxin: Optional["JinXinParams"] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if not 0 <= self.r <= self.n:
            raise ValueError("r must lie in [0, n]")
        if self.L <= 0 or self.T <= 0:
            raise ValueError("L and T must be positive")
        G = np.asarray(self.boundary_matrix, dtype=float)
        if G.shape != (self.n, self.n):
            raise ValueError(f"boundary matrix must be {self.n}x{self.n}")
        object.__setattr__(self, "boundary_matrix", G)
        for pts, end in ((self.time_breakpoints, self.T), (self.space_breakpoints, self.L)):
            if pts:
                p = np.asarray(pts, dtype=float)
                if np.any(np.diff(p) <= 0) or p[0] != 0.0 or not math.isclose(p[-1], end):
                    raise ValueError("breakpoints must increase strictly from 0 to the domain end")

    @property
    def M(self) -> int:
        return len(self.modes)

    @property
    def G_blocks(self):
        r, G = self.r, self.boundary_matrix
        return G[:r, :r], G[:r, r:], G[r:, :r], G[r:, r:]

    def d(self, t: float) -> np.ndarray:
        if self.boundary_data is None:
            return np.zeros(self.n)
        return np.asarray(self.boundary_data(t), dtype=float)

    def aggregated_source(self, y, u, beta_row) -> np.ndarray:
        out = np.zeros_like(y, dtype=float)
        for j, bj in enumerate(beta_row):
            if bj != 0.0:
                out = out + bj * self.source(y, u, j)
        return out

    def aggregated_jacobian(self, y, u, beta_row) -> np.ndarray:
        jac = np.zeros(y.shape + (self.n,))
        for j, bj in enumerate(beta_row):
            if bj == 0.0:
                continue
            if self.source_jacobian is not None:
                jac = jac + bj * self.source_jacobian(y, u, j)
            else:
                jac = jac + bj * _fd_jacobian(lambda z: self.source(z, u, j), y)
        return jac

    def check_invariants(self, samples: int = 64, u=None) -> None:
        """Validate the speed sign pattern, speed Lipschitz bound and f(0) = 0 on samples."""
        x = np.linspace(0.0, self.L, samples)
        lam = np.asarray(self.lam(x))
        if np.any(lam[:, : self.r] >= 0) or np.any(lam[:, self.r :] <= 0):
            raise ValueError("characteristic speeds violate the sign pattern")
        if samples > 1:
            slope = np.abs(np.diff(lam, axis=0)) / (x[1] - x[0])
            if np.max(slope) > self.lipschitz_lambda * (1 + 1e-9) + 1e-12:
                raise ValueError("speeds exceed the declared Lipschitz constant")
        zero = np.zeros((1, self.n))
        for j in range(self.M):
            if np.any(self.source(zero, u, j) != 0.0):
                raise ValueError(f"source of mode {j} does not vanish at y = 0")


def _fd_jacobian(fun, y, eps=1e-7):
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    f0 = fun(y)
    jac = np.empty(y.shape + (n,))
    for k in range(n):
        h = eps * np.maximum(1.0, np.abs(y[..., k]))
        yp = y.copy()
        yp[..., k] += h
        jac[..., :, k] = (fun(yp) - f0) / h[..., None]
    return jac


@dataclass(frozen=True)
class JinXinParams:
    a: float
    kappa: float


# --------------------------------------------------------------------------- #
# Grids
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N_t: int

    def __post_init__(self):
        if self.N_t < 1:
            raise ValueError("N_t must be at least 1")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @classmethod
    def from_dt(cls, T: float, dt: float) -> "TimeGrid":
        n = round(T / dt)
        if n < 1 or not math.isclose(n * dt, T, rel_tol=1e-9):
            raise GridMismatchError(f"dt={dt} does not divide T={T}")
        return cls(T, n)

    @property
    def dt(self) -> float:
        return self.T / self.N_t

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N_t + 1)


@dataclass(frozen=True)
class SpaceGrid:
    L: float
    N_x: int

    def __post_init__(self):
        if self.N_x < 2:
            raise ValueError("N_x must be at least 2")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def dx(self) -> float:
        return self.L / self.N_x

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.N_x) + 0.5) * self.dx


def refinement_ratio(fine: TimeGrid, coarse: TimeGrid) -> int:
    """Number of ``fine`` intervals per ``coarse`` interval; raises on mismatch."""
    if not math.isclose(fine.T, coarse.T, rel_tol=1e-12):
        raise GridMismatchError("grid mismatch: horizons differ")
    if fine.N_t % coarse.N_t:
        raise GridMismatchError("grid mismatch: grids are not nested")
    return fine.N_t // coarse.N_t


# --------------------------------------------------------------------------- #
# Controls
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class RelaxedControl:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.N_t:
            raise ValueError("values must have shape (N_t, M)")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite control values")
        if np.any(v < 0.0) or np.any(v > 1.0) or np.any(np.abs(v.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            v = _project_rows(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[1]

    @classmethod
    def uniform(cls, grid: TimeGrid, M: int) -> "RelaxedControl":
        return cls(grid, np.full((grid.N_t, M), 1.0 / M))

    @classmethod
    def from_scalar(cls, grid: TimeGrid, beta) -> "RelaxedControl":
        """Two-mode control from the first-mode weight ``beta`` (second = 1 - beta)."""
        b = np.broadcast_to(np.asarray(beta, dtype=float), (grid.N_t,))
        return cls(grid, np.column_stack([b, 1.0 - b]))

    def integrals(self) -> np.ndarray:
        """Running integrals of each mode weight at the grid nodes, shape (N_t+1, M)."""
        out = np.zeros((self.grid.N_t + 1, self.M))
        np.cumsum(self.values * self.grid.dt, axis=0, out=out[1:])
        return out

    def on_grid(self, grid: TimeGrid) -> "RelaxedControl":
        """Piecewise-constant transfer to a nested grid (refinement or interval averaging)."""
        if grid.N_t == self.grid.N_t:
            return self
        if grid.N_t % self.grid.N_t == 0:
            k = grid.N_t // self.grid.N_t
            return RelaxedControl(grid, np.repeat(self.values, k, axis=0))
        k = refinement_ratio(self.grid, grid)
        return RelaxedControl(grid, self.values.reshape(grid.N_t, k, self.M).mean(axis=1))


@dataclass(frozen=True, eq=False)
class BinaryControl:
    """One active mode per interval; mode indices are 0-based."""

    grid: TimeGrid
    active_mode: np.ndarray
    M: int

    def __post_init__(self):
        a = np.array(self.active_mode, dtype=np.int64)
        if a.shape != (self.grid.N_t,):
            raise ValueError("active_mode must have length N_t")
        if np.any(a < 0) or np.any(a >= self.M):
            raise ValueError("mode index out of range")
        a.setflags(write=False)
        object.__setattr__(self, "active_mode", a)

    @property
    def alpha(self) -> np.ndarray:
        out = np.zeros((self.grid.N_t, self.M))
        out[np.arange(self.grid.N_t), self.active_mode] = 1.0
        return out

    def to_relaxed(self) -> RelaxedControl:
        return RelaxedControl(self.grid, self.alpha)

    @classmethod
    def from_alpha(cls, grid: TimeGrid, alpha: np.ndarray) -> "BinaryControl":
        alpha = np.asarray(alpha)
        if not (np.all((alpha == 0) | (alpha == 1)) and np.all(alpha.sum(axis=1) == 1)):
            raise ValueError("alpha violates the SOS-1 condition")
        return cls(grid, np.argmax(alpha, axis=1), alpha.shape[1])


@dataclass(frozen=True, eq=False)
class ContinuousControl:
    """Piecewise-constant u on a TimeGrid with box admissible set [lower, upper]."""

    grid: TimeGrid
    values: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.N_t:
            raise ValueError("values must have N_t rows")
        if self.lower is not None and np.any(v < np.asarray(self.lower)):
            raise ValueError("control below admissible box")
        if self.upper is not None and np.any(v > np.asarray(self.upper)):
            raise ValueError("control above admissible box")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def at_step(self, t_mid: float):
        k = min(int(t_mid / self.grid.dt), self.grid.N_t - 1)
        return self.values[k]


# --------------------------------------------------------------------------- #
# Trajectories and costs
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    tgrid: TimeGrid
    sgrid: SpaceGrid
    data: np.ndarray
    solver_tag: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 3 or d.shape[:2] != (self.tgrid.N_t + 1, self.sgrid.N_x):
            raise ValueError("trajectory shape inconsistent with grids")
        object.__setattr__(self, "data", d)

    @property
    def n(self) -> int:
        return self.data.shape[2]

    @property
    def final(self) -> np.ndarray:
        return self.data[-1]

    def same_grids(self, other: "StateTrajectory") -> bool:
        return (
            self.tgrid == other.tgrid
            and self.sgrid == other.sgrid
            and self.data.shape == other.data.shape
        )

    def __sub__(self, other: "StateTrajectory") -> "StateTrajectory":
        if not self.same_grids(other):
            raise GridMismatchError("grid mismatch")
        return StateTrajectory(self.tgrid, self.sgrid, self.data - other.data, "difference")


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Terminal cost: either a density ``g(y)`` or tracking of ``observation . y``.

    For tracking, ``target`` holds the reference profile sampled at the cell
    centers and ``observation`` the weights turning a state into the tracked
    scalar.
    """

    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    target: Optional[np.ndarray] = None
    observation: Optional[np.ndarray] = None


def trapezoid_periodic(values: np.ndarray, dx: float) -> float:
    """Trapezoidal rule on uniformly spaced cell centers closed periodically."""
    # periodic closure adds the wrap-around panel, making every weight equal to dx
    return float(dx * np.sum(values))


# --------------------------------------------------------------------------- #
# Norms
# --------------------------------------------------------------------------- #


def dag_norm(y: StateTrajectory, K: float) -> float:
    """Exponentially time-weighted sup-in-time, L1-in-space norm."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    d = y.data
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite state")
    l1 = np.abs(d).sum(axis=(1, 2)) * y.sgrid.dx
    weights = np.exp(-K * y.tgrid.nodes)
    return float(np.max(weights * l1))


def l1_time_sup_distance(y1: StateTrajectory, y2: StateTrajectory) -> float:
    if not y1.same_grids(y2):
        raise GridMismatchError("grid mismatch")
    return dag_norm(y1 - y2, 0.0)


# --------------------------------------------------------------------------- #
# Simplex projection
# --------------------------------------------------------------------------- #


def _project_rows(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    out = v.copy()
    feasible = np.all((v >= 0.0) & (v <= 1.0), axis=1) & (np.abs(v.sum(axis=1) - 1.0) <= ROW_SUM_TOL)
    rows = ~feasible
    if not np.any(rows):
        return out
    w = v[rows]
    m = w.shape[1]
    srt = -np.sort(-w, axis=1)
    css = np.cumsum(srt, axis=1) - 1.0
    idx = np.arange(1, m + 1)
    cond = srt - css / idx > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(w.shape[0]), rho] / (rho + 1)
    out[rows] = np.maximum(w - theta[:, None], 0.0)
    return out


def project_simplex_rows(values: np.ndarray, grid: Optional[TimeGrid] = None) -> RelaxedControl:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if grid is None:
        grid = TimeGrid(1.0 * values.shape[0], values.shape[0])
    return RelaxedControl(grid, _project_rows(values))
