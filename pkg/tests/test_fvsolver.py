import math

import numpy as np
import pytest

from relaxround import _core
from relaxround.core import BinaryControl, RelaxedControl, SpaceGrid, SystemSpec, TimeGrid
from relaxround.fvsolver import (
    SolverConfig,
    UnstableStepError,
    apply_boundary,
    derive_time_grid,
    face_speeds,
    solve_forward,
    source_step_implicit,
    transport_step,
)
from relaxround.problems import burgers_switch, jinxin_system, linear_system, variable_speed_system


def scalar_advection(speed=1.0, L=1.0, T=1.0, y0=None):
    y0 = y0 or (lambda x: np.sin(2 * np.pi * x / L)[..., None])
    return SystemSpec(
        n=1,
        r=0 if speed > 0 else 1,
        lam=lambda x: np.full(np.shape(x) + (1,), speed),
        modes=(1,),
        source=lambda y, u, j: np.zeros_like(y),
        boundary_matrix=np.eye(1),
        initial_data=y0,
        L=L,
        T=T,
    )


ONE = lambda g: RelaxedControl(g, np.ones((g.N_t, 1)))  # noqa: E731
PERIODIC = SolverConfig(boundary_kind="periodic")


# --------------------------------------------------------------------------- time grid


def test_time_grid_for_flux_switching_preset():
    spec = jinxin_system(5.0, 1e-8, lambda x: 0 * x, 2 * np.pi, 3.0)
    sg = SpaceGrid(2 * np.pi, 300)
    dt_raw = 0.5 * (2 * np.pi / 300) / 5.0
    assert dt_raw == pytest.approx(2.0944e-3, rel=1e-4)
    tg = derive_time_grid(spec, sg, 0.5)
    assert tg.N_t == math.ceil(3.0 / dt_raw) and tg.dt <= dt_raw


def test_time_grid_exact_division():
    tg = derive_time_grid(scalar_advection(), SpaceGrid(1.0, 10), cfl=1.0)
    assert tg.N_t == 10 and tg.dt == pytest.approx(0.1)


def test_time_grid_variable_speed():
    spec = variable_speed_system(L=1.0, T=0.5)
    sg = SpaceGrid(1.0, 10)
    smax = np.max(1.0 + sg.centers)
    tg = derive_time_grid(spec, sg, 0.5)
    assert tg.N_t == math.ceil(0.5 / (0.5 * 0.1 / smax))


def test_time_grid_degenerate_and_multiple():
    spec = scalar_advection(speed=0.0)
    with pytest.raises(ValueError, match="degenerate"):
        derive_time_grid(spec, SpaceGrid(1.0, 10))
    tg = derive_time_grid(scalar_advection(), SpaceGrid(1.0, 10), cfl=1.0, multiple_of=4)
    assert tg.N_t == 12


# --------------------------------------------------------------------------- transport


def test_constant_state_is_preserved():
    spec = scalar_advection(y0=lambda x: np.full(np.shape(x) + (1,), 3.0))
    sg = SpaceGrid(1.0, 20)
    tg = derive_time_grid(spec, sg, 0.8)
    y = solve_forward(spec, ONE(TimeGrid(1.0, 1)), tg, sg, PERIODIC)
    np.testing.assert_allclose(y.data, 3.0, rtol=0, atol=1e-14)


def test_periodic_mass_is_conserved_for_square_pulse():
    spec = scalar_advection(y0=lambda x: ((x > 0.25) & (x < 0.75)).astype(float)[..., None])
    sg = SpaceGrid(1.0, 64)
    tg = derive_time_grid(spec, sg, 0.5)
    y = solve_forward(spec, ONE(TimeGrid(1.0, 1)), tg, sg, PERIODIC)
    mass = y.data.sum(axis=(1, 2)) * sg.dx
    assert np.max(np.abs(mass - mass[0])) <= 1e-12


def test_transport_first_order_convergence():
    errs = []
    for nx in (50, 100, 200, 400):
        spec = scalar_advection()
        sg = SpaceGrid(1.0, nx)
        tg = derive_time_grid(spec, sg, 0.5)
        y = solve_forward(spec, ONE(TimeGrid(1.0, 1)), tg, sg, PERIODIC)
        exact = np.sin(2 * np.pi * (sg.centers - 1.0))
        errs.append(np.sum(np.abs(y.final[:, 0] - exact)) * sg.dx)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.8), orders


def test_unstable_step_is_rejected():
    spec = scalar_advection()
    sg = SpaceGrid(1.0, 10)
    y = np.zeros((10, 1))
    with pytest.raises(UnstableStepError):
        transport_step(y, spec, sg, 0.2, apply_boundary(y, spec, 0.0, "periodic"))


def test_face_speeds_at_ends_use_boundary_values():
    spec = variable_speed_system()
    sg = SpaceGrid(1.0, 4)
    f = face_speeds(spec, sg)[:, 0]
    np.testing.assert_allclose(f, [1.0, 1.25, 1.5, 1.75, 2.0])


# --------------------------------------------------------------------------- boundary


def test_zero_coupling_gives_zero_inflow():
    spec = linear_system()
    y = np.arange(8.0).reshape(4, 2) + 1
    left, right = apply_boundary(y, spec, 0.0)
    assert right[0] == 0.0 and left[1] == 0.0


def test_periodic_identity_blocks_for_jinxin():
    spec = jinxin_system(1.0, 1.0, lambda x: 0 * x, 1.0, 1.0)
    y = np.random.default_rng(0).normal(size=(5, 2))
    left, right = apply_boundary(y, spec, 0.0)
    assert right[0] == y[0, 0] and left[1] == y[-1, 1]
    left_p, right_p = apply_boundary(y, spec, 0.0, "periodic")
    assert right_p[0] == right[0] and left_p[1] == left[1]


def test_random_coupling_matches_dense_product():
    rng = np.random.default_rng(4)
    G = rng.normal(size=(3, 3))
    spec = SystemSpec(
        n=3,
        r=1,
        lam=lambda x: np.stack([-np.ones_like(x), np.ones_like(x), 2 * np.ones_like(x)], axis=-1),
        modes=(1,),
        source=lambda y, u, j: 0 * y,
        boundary_matrix=G,
        initial_data=lambda x: 0 * np.stack([x, x, x], -1),
        L=1.0,
        T=1.0,
        boundary_data=lambda t: np.array([t, 2 * t, 3 * t]),
    )
    y = rng.normal(size=(6, 3))
    left, right = apply_boundary(y, spec, 0.5)
    out = np.array([y[0, 0], y[-1, 1], y[-1, 2]])
    expected = G @ out + np.array([0.5, 1.0, 1.5])
    assert right[0] == pytest.approx(expected[0])
    np.testing.assert_allclose(left[1:], expected[1:])


# --------------------------------------------------------------------------- source step


def test_zero_source_step_is_identity():
    spec = scalar_advection()
    y = np.random.default_rng(1).normal(size=(7, 1))
    np.testing.assert_array_equal(source_step_implicit(y, spec, None, [1.0], 0.1), y)


def _jinxin_no_closed_form(a, kappa):
    spec = jinxin_system(a, kappa, lambda x: 0 * x, 1.0, 1.0)
    return SystemSpec(**{**spec.__dict__, "implicit_source": None, "jinxin": None})


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0])
def test_jinxin_source_closed_form_and_newton(beta):
    a, kappa, dt = 2.0, 0.05, 0.01
    c, xi, r = dt / kappa, 0.4, dt / kappa
    eta = 1.7  # spatially constant
    y = np.tile([xi - a * eta, xi + a * eta], (4, 1))
    expected_xi = (xi + r * (beta * eta**2 - 0.5 * eta**2)) / (1 + c)
    closed = source_step_implicit(y, jinxin_system(a, kappa, lambda x: 0 * x, 1.0, 1.0), None, [beta, 1 - beta], dt)
    newton = source_step_implicit(y, _jinxin_no_closed_form(a, kappa), None, [beta, 1 - beta], dt)
    for z in (closed, newton):
        np.testing.assert_allclose(0.5 * (z[:, 0] + z[:, 1]), expected_xi, rtol=1e-12)
        np.testing.assert_allclose((z[:, 1] - z[:, 0]) / (2 * a), eta, rtol=1e-12)
    np.testing.assert_allclose(closed, newton, rtol=1e-12, atol=1e-12)


def test_stiff_limit_relaxes_to_equilibrium():
    a, kappa, beta, eta, xi0 = 5.0, 1e-8, 0.8, 1.3, 0.9
    spec = jinxin_system(a, kappa, lambda x: 0 * x, 1.0, 1.0)
    y = np.array([[xi0 - a * eta, xi0 + a * eta]])
    eq = (beta - 0.5) * eta**2
    # dt/kappa = 1e8
    z = source_step_implicit(y, spec, None, [beta, 1 - beta], 1.0)
    assert 0.5 * (z[0, 0] + z[0, 1]) == pytest.approx(eq, rel=1e-6)
    # the preset step (dt/kappa ~ 2e5) contracts the distance to equilibrium by 1/(1 + dt/kappa)
    dt = 0.5 * (2 * np.pi / 300) / a
    z = source_step_implicit(y, spec, None, [beta, 1 - beta], dt)
    xi = 0.5 * (z[0, 0] + z[0, 1])
    assert abs(xi - eq) <= abs(xi0 - eq) / (1 + dt / kappa) * (1 + 1e-9)


# --------------------------------------------------------------------------- full solves


def test_zero_data_stays_zero():
    spec = linear_system(G=np.array([[0, 0.5], [0.5, 0]]), y0=lambda x: np.zeros(np.shape(x) + (2,)))
    sg = SpaceGrid(1.0, 20)
    tg = derive_time_grid(spec, sg, 0.5)
    y = solve_forward(spec, ONE(TimeGrid(1.0, 2)), tg, sg)
    assert np.all(y.data == 0.0)


def test_kernel_matches_generic_path():
    p = burgers_switch(N_x=60, kappa=1e-2, control_intervals=6)
    beta = RelaxedControl.from_scalar(p.control_grid, np.linspace(0.1, 0.9, 6))
    fast = solve_forward(p.spec, beta, p.tgrid, p.sgrid, p.solver)
    slow_cfg = SolverConfig(cfl=p.solver.cfl, boundary_kind="periodic", use_kernel=False)
    slow = solve_forward(p.spec, beta, p.tgrid, p.sgrid, slow_cfg)
    assert fast.solver_tag.startswith("fv-jinxin") and slow.solver_tag == "fv-generic"
    np.testing.assert_allclose(fast.data, slow.data, rtol=1e-12, atol=1e-12)


def test_compiled_and_fallback_kernels_agree():
    rng = np.random.default_rng(8)
    y0 = rng.normal(size=(40, 2))
    w = rng.uniform(-0.5, 0.5, 30)
    s = np.ones(30)
    a = np.asarray(_core.jinxin_forward(y0, w, s, 0.4, 3.0, 2.0))
    b = _core._fallback.jinxin_forward(y0, w, s, 0.4, 3.0, 2.0)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)
    mu = rng.normal(size=(40, 2))
    np.testing.assert_allclose(
        np.asarray(_core.jinxin_adjoint(a, w, s, 0.4, 3.0, 2.0, mu)),
        _core._fallback.jinxin_adjoint(a, w, s, 0.4, 3.0, 2.0, mu),
        rtol=1e-13,
        atol=1e-13,
    )


def test_binary_and_embedded_relaxed_are_bitwise_identical():
    p = burgers_switch(N_x=50, kappa=1e-3, control_intervals=12)
    rng = np.random.default_rng(3)
    alpha = BinaryControl(p.control_grid, rng.integers(0, 2, 12), 2)
    y1 = solve_forward(p.spec, alpha, p.tgrid, p.sgrid, p.solver)
    y2 = solve_forward(p.spec, alpha.to_relaxed(), p.tgrid, p.sgrid, p.solver)
    assert np.array_equal(y1.data, y2.data)


def test_jinxin_eta_mass_conserved_at_stiff_preset():
    p = burgers_switch()
    beta = RelaxedControl.from_scalar(p.control_grid, 0.5)
    y = solve_forward(p.spec, beta, p.tgrid, p.sgrid, p.solver)
    eta = y.data @ p.cost.observation
    mass = eta.sum(axis=1) * p.sgrid.dx
    assert np.max(np.abs(mass - mass[0])) / abs(mass[0]) <= 1e-10


def test_pure_advection_matches_exact_characteristics():
    # f = 0, speeds +-1, periodic: the solution is the shifted initial profile
    spec = linear_system(
        rates=(0.0,),
        G=np.eye(2),
        L=1.0,
        T=0.5,
        y0=lambda x: np.stack([np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)], -1),
    )
    errs = []
    for nx in (50, 100, 200):
        sg = SpaceGrid(1.0, nx)
        tg = derive_time_grid(spec, sg, 0.5)
        y = solve_forward(spec, ONE(TimeGrid(0.5, 1)), tg, sg)
        t = tg.nodes[:, None]
        x = sg.centers[None, :]
        exact = np.stack([np.sin(2 * np.pi * (x + t)), np.cos(2 * np.pi * (x - t))], -1)
        errs.append(np.max(np.sum(np.abs(y.data - exact), axis=(1, 2)) * sg.dx))
    assert errs[1] < errs[0] and errs[2] < errs[1]
    assert np.log2(errs[1] / errs[2]) >= 0.8
