import numpy as np
import pytest

from relaxround.adjoint import (
    ReducedCost,
    fd_gradient_oracle,
    gradient_selftest,
    reduced_gradient,
    solve_adjoint,
    tracking_cost,
)
from relaxround.core import CostSpec, GridMismatchError, RelaxedControl, SpaceGrid, StateTrajectory, TimeGrid
from relaxround.fvsolver import solve_forward
from relaxround.problems import burgers_switch, eta_weights, jinxin_transform


def coarse_problem(**kw):
    kw = {"N_x": 40, "kappa": 1e-2, "control_intervals": 12, **kw}
    return burgers_switch(**kw)


def state_from_eta(eta, a=5.0, T=1.0):
    eta = np.asarray(eta, dtype=float)
    phys = np.stack([eta, np.zeros_like(eta)], -1)
    y = phys @ jinxin_transform(a).T
    return StateTrajectory(TimeGrid(T, 1), SpaceGrid(2 * np.pi, eta.size), np.stack([y, y]), meta={"a": a})


# --------------------------------------------------------------------------- cost


def test_tracking_cost_examples():
    sg = SpaceGrid(2 * np.pi, 64)
    target = 1 - np.sin(sg.centers)
    cost = CostSpec(target=target, observation=eta_weights(5.0))
    assert tracking_cost(state_from_eta(target), cost) == pytest.approx(0.0, abs=1e-28)
    assert tracking_cost(state_from_eta(target + 1.0), cost) == pytest.approx(np.pi, rel=1e-12)
    with pytest.raises(GridMismatchError):
        tracking_cost(state_from_eta(target[:-1]), cost)


def test_optimized_study_value_in_band():
    # informational band around the reported optimum at the preset scale
    p = burgers_switch()
    J = ReducedCost(p)
    alpha = np.r_[np.ones(36), np.zeros(12)]  # mode 0, then mode 1 from t = 2.25
    assert 0.04 <= J(alpha) <= 0.17


# --------------------------------------------------------------------------- adjoint


def test_zero_residual_gives_zero_adjoint_and_gradient():
    p = coarse_problem()
    beta = RelaxedControl.from_scalar(p.control_grid, 0.3)
    y = solve_forward(p.spec, beta, p.tgrid, p.sgrid, p.solver)
    cost = CostSpec(target=y.final @ p.cost.observation, observation=p.cost.observation)
    adj = solve_adjoint(y, beta, cost, p.spec, p.solver)
    assert np.all(adj.data == 0.0)
    g = reduced_gradient(y, adj, p.kappa, p.control_grid)
    assert np.all(g.values == 0.0)


def test_spatially_homogeneous_data_keep_q_zero():
    # eta constant in space: p_x = 0 and q(T) = 0, so q stays zero and p constant
    p = coarse_problem(eta0=lambda x: np.full_like(x, 0.7), target=lambda x: np.full_like(x, 0.2))
    beta = RelaxedControl.from_scalar(p.control_grid, 0.6)
    y = solve_forward(p.spec, beta, p.tgrid, p.sgrid, p.solver)
    adj = solve_adjoint(y, beta, p.cost, p.spec, p.solver)
    assert np.max(np.abs(adj.q)) <= 1e-12
    np.testing.assert_allclose(adj.p, -(0.7 - 0.2), atol=1e-12)


def test_zero_state_gives_zero_gradient():
    p = coarse_problem(eta0=lambda x: np.zeros_like(x))
    beta = RelaxedControl.from_scalar(p.control_grid, 0.4)
    _, g = ReducedCost(p).value_and_gradient(beta)
    assert np.all(g.values == 0.0)


def test_adjoint_grid_mismatch():
    p = coarse_problem()
    beta = RelaxedControl.from_scalar(p.control_grid, 0.5)
    y = solve_forward(p.spec, beta, p.tgrid, p.sgrid, p.solver)
    with pytest.raises(GridMismatchError):
        solve_adjoint(y, beta, CostSpec(target=np.zeros(3), observation=p.cost.observation), p.spec)


def test_adjoint_is_bounded_by_terminal_residual():
    p = coarse_problem()
    beta = RelaxedControl.from_scalar(p.control_grid, np.linspace(0, 1, 12))
    y = solve_forward(p.spec, beta, p.tgrid, p.sgrid, p.solver)
    adj = solve_adjoint(y, beta, p.cost, p.spec, p.solver)
    resid = np.max(np.abs(y.final @ p.cost.observation - p.cost.target))
    assert np.max(np.abs(adj.data)) <= 50.0 * resid


# --------------------------------------------------------------------------- gradient


def test_fd_oracle_harness_on_quadratic():
    rng = np.random.default_rng(0)
    b = rng.uniform(0.2, 0.8, 7)
    d = rng.uniform(-1, 1, 7)
    fd = fd_gradient_oracle(lambda x: float(np.sum(x**2)), b, d, 1e-4)
    assert fd == pytest.approx(2 * np.dot(b, d), rel=1e-10)
    assert fd_gradient_oracle(lambda x: 1 / 0, b, np.zeros(7)) == 0.0
    with pytest.raises(ValueError, match="infeasible"):
        fd_gradient_oracle(lambda x: 0.0, np.ones(7), d, 1e-3)


def test_adjoint_gradient_matches_central_differences():
    p = coarse_problem()
    J = ReducedCost(p)
    rng = np.random.default_rng(11)
    for _ in range(3):
        b = rng.uniform(0.1, 0.9, 12)
        _, g = J.value_and_gradient(b)
        for _ in range(4):
            d = rng.uniform(-1, 1, 12)
            fd = fd_gradient_oracle(J, b, d, 1e-5)
            assert abs(g.directional(d) - fd) / max(1.0, abs(fd)) <= 1e-6


def test_row_form_directional_derivative():
    p = coarse_problem()
    J = ReducedCost(p)
    b = np.full(12, 0.5)
    _, g = J.value_and_gradient(b)
    d = np.random.default_rng(2).uniform(-0.3, 0.3, 12)
    rows = RelaxedControl.from_scalar(p.control_grid, b).values
    drows = np.column_stack([d, -d])
    fd = fd_gradient_oracle(J, rows, drows, 1e-5)
    assert p.control_grid.dt * np.sum(g.rows() * drows) == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_gradient_on_finer_control_grid_is_consistent():
    p = coarse_problem()
    J = ReducedCost(p)
    b = np.random.default_rng(4).uniform(0.2, 0.8, 12)
    _, g_coarse = J.value_and_gradient(b)
    fine = RelaxedControl.from_scalar(p.control_grid, b).on_grid(p.tgrid)
    y = solve_forward(p.spec, fine, p.tgrid, p.sgrid, p.solver)
    adj = solve_adjoint(y, fine, p.cost, p.spec, p.solver)
    g_fine = reduced_gradient(y, adj, p.kappa)
    k = p.tgrid.N_t // 12
    np.testing.assert_allclose(g_fine.values.reshape(12, k).mean(axis=1), g_coarse.values, rtol=1e-12, atol=1e-14)


def test_selftest_reports_ok():
    res = gradient_selftest(coarse_problem(), n_directions=3, seed=1)
    assert res["ok"] and len(res["checks"]) == 3
