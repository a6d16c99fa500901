"""Ready-made systems: the flux-switching Jin-Xin/Burgers preset and small test systems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import CostSpec, JinXinParams, SpaceGrid, SystemSpec, TimeGrid
from .fvsolver import SolverConfig, derive_time_grid


def jinxin_transform(a: float) -> np.ndarray:
    """Rows are left eigenvectors of the (eta, xi) flux matrix [[0, 1], [a^2, 0]].

    ``y = P @ (eta, xi)`` gives ``y_0 = xi - a*eta`` (speed -a) and
    ``y_1 = xi + a*eta`` (speed +a).
    """
    return np.array([[-a, 1.0], [a, 1.0]])


def eta_weights(a: float) -> np.ndarray:
    """Weights recovering eta from the characteristic state."""
    return np.linalg.inv(jinxin_transform(a))[0]


def jinxin_system(
    a: float,
    kappa: float,
    eta0: Callable[[np.ndarray], np.ndarray],
    L: float,
    T: float,
    name: str = "jinxin",
) -> SystemSpec:
    """Periodic Jin-Xin relaxation of the flux-switched Burgers equation.

    Mode 0 relaxes ``xi`` towards ``eta^2/2``, mode 1 towards ``-eta^2/2``.
    """
    if a <= 0 or kappa <= 0:
        raise ValueError("a and kappa must be positive")
    P = jinxin_transform(a)
    signs = (0.5, -0.5)

    def split(y):
        eta = (y[..., 1] - y[..., 0]) / (2.0 * a)
        xi = 0.5 * (y[..., 0] + y[..., 1])
        return eta, xi

    def source(y, u, j):
        eta, xi = split(y)
        s = (signs[j] * eta * eta - xi) / kappa
        return np.stack([s, s], axis=-1)

    def source_jacobian(y, u, j):
        eta, _ = split(y)
        # ds/dy0 = (2*g*eta*(-1/2a) - 1/2)/kappa, ds/dy1 = (2*g*eta*(1/2a) - 1/2)/kappa
        d0 = (-signs[j] * eta / a - 0.5) / kappa
        d1 = (signs[j] * eta / a - 0.5) / kappa
        row = np.stack([d0, d1], axis=-1)
        return np.stack([row, row], axis=-2)

    def implicit_source(y, u, beta_row, dt):
        eta, xi = split(y)
        c = dt / kappa
        w = 0.5 * (beta_row[0] - beta_row[1])
        s = beta_row[0] + beta_row[1]
        xi = (xi + c * w * eta * eta) / (1.0 + c * s)
        return np.stack([xi - a * eta, xi + a * eta], axis=-1)

    def lam(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.full(x.shape, -a), np.full(x.shape, a)], axis=-1)

    def initial_data(x):
        eta = np.asarray(eta0(np.asarray(x, dtype=float)), dtype=float)
        phys = np.stack([eta, np.zeros_like(eta)], axis=-1)
        return phys @ P.T

    spec = SystemSpec(
        n=2,
        r=1,
        lam=lam,
        modes=(1, 2),
        source=source,
        source_jacobian=source_jacobian,
        boundary_matrix=np.eye(2),
        initial_data=initial_data,
        L=L,
        T=T,
        lipschitz_lambda=0.0,
        name=name,
        implicit_source=implicit_source,
        jinxin=JinXinParams(a=a, kappa=kappa),
    )
    return spec


def square_pulse(L: float, height: float = 2.0):
    def eta0(x):
        return height * ((x > L / 4) & (x < 3 * L / 4)).astype(float)

    return eta0


@dataclass
class Problem:
    """A system with its grids, cost and solver settings."""

    spec: SystemSpec
    sgrid: SpaceGrid
    tgrid: TimeGrid
    control_grid: TimeGrid
    cost: CostSpec
    solver: SolverConfig = field(default_factory=SolverConfig)

    @property
    def a(self) -> float:
        return self.spec.jinxin.a

    @property
    def kappa(self) -> float:
        return self.spec.jinxin.kappa


def burgers_switch(
    N_x: int = 300,
    kappa: float = 1e-8,
    a: float = 5.0,
    cfl: float = 0.5,
    T: float = 3.0,
    control_intervals: int = 48,
    L: float = 2 * math.pi,
    eta0: Optional[Callable] = None,
    target: Optional[Callable] = None,
) -> Problem:
    """Flux-switching test problem: square pulse of height 2, target ``1 - sin(x)``."""
    eta0 = eta0 or square_pulse(L)
    target = target or (lambda x: 1.0 - np.sin(x))
    spec = jinxin_system(a, kappa, eta0, L, T, name="burgers-switch")
    sgrid = SpaceGrid(L, N_x)
    tgrid = derive_time_grid(spec, sgrid, cfl, multiple_of=control_intervals)
    cost = CostSpec(target=np.asarray(target(sgrid.centers), dtype=float), observation=eta_weights(a))
    return Problem(
        spec=spec,
        sgrid=sgrid,
        tgrid=tgrid,
        control_grid=TimeGrid(T, control_intervals),
        cost=cost,
        solver=SolverConfig(cfl=cfl, boundary_kind="periodic"),
    )


def linear_system(
    speeds=(-1.0, 1.0),
    rates=(-1.0,),
    G=None,
    L: float = 1.0,
    T: float = 1.0,
    y0: Optional[Callable] = None,
    d: Optional[Callable] = None,
) -> SystemSpec:
    """Constant-speed system with linear mode sources ``f(y, v^j) = rates[j] * y``."""
    speeds = np.asarray(speeds, dtype=float)
    n = speeds.size
    r = int(np.sum(speeds < 0))
    rates = tuple(float(c) for c in rates)
    if y0 is None:
        def y0(x):
            bump = np.exp(-100.0 * (x - 0.5 * L) ** 2)
            return np.repeat(bump[..., None], n, axis=-1)

    def lam(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(speeds, x.shape + (n,)).copy()

    def source(y, u, j):
        return rates[j] * y

    def source_jacobian(y, u, j):
        return np.broadcast_to(rates[j] * np.eye(n), y.shape + (n,)).copy()

    return SystemSpec(
        n=n,
        r=r,
        lam=lam,
        modes=tuple(range(1, len(rates) + 1)),
        source=source,
        source_jacobian=source_jacobian,
        boundary_matrix=np.zeros((n, n)) if G is None else np.asarray(G, dtype=float),
        initial_data=y0,
        boundary_data=d,
        L=L,
        T=T,
        name="linear",
    )


def variable_speed_system(L: float = 1.0, T: float = 0.5, y0=None) -> SystemSpec:
    """Scalar transport with speed ``1 + x`` and zero source."""

    def lam(x):
        return (1.0 + np.asarray(x, dtype=float))[..., None]

    def source(y, u, j):
        return np.zeros_like(y)

    y0 = y0 or (lambda x: np.sin(np.pi * np.asarray(x))[..., None])
    return SystemSpec(
        n=1,
        r=0,
        lam=lam,
        modes=(1,),
        source=source,
        boundary_matrix=np.zeros((1, 1)),
        initial_data=y0,
        L=L,
        T=T,
        lipschitz_lambda=1.0,
        name="variable-speed",
    )
