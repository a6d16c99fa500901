"""Relax-and-round optimal switching control for semilinear hyperbolic systems."""

from ._core import BACKEND
from .core import (
    BinaryControl,
    ContinuousControl,
    CostSpec,
    GridMismatchError,
    RelaxedControl,
    SpaceGrid,
    StateTrajectory,
    SystemSpec,
    TimeGrid,
    dag_norm,
    l1_time_sup_distance,
    project_simplex_rows,
)
from .rounding import integrated_deviation, sum_up_rounding
from .fvsolver import SolverConfig, derive_time_grid, solve_forward
from .problems import Problem, burgers_switch, jinxin_system, linear_system
from .characteristics import apply_psi, solve_fixed_point, trace_characteristic
from .adjoint import ReducedCost, fd_gradient_oracle, gradient_selftest, reduced_gradient, solve_adjoint
from .optimizer import OptimizeConfig, gap_study, optimize_relaxed, relax_round, relax_round_study, smooth_beta

__version__ = "0.1.0"
