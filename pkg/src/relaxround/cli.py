"""Command-line entry point.

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import artifacts as art
from .adjoint import ReducedCost, gradient_selftest, observed, tracking_cost
from .characteristics import FixedPointError
from .config import ConfigError, RunConfig, load
from .core import RelaxedControl, TimeGrid, trapezoid_periodic
from .fvsolver import NumericalError, solve_forward
from .optimizer import bang_bang_fraction, gap_study, optimize_relaxed, relax_round, smooth_beta
from .rounding import sum_up_rounding

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

COMMANDS = ("solve", "optimize", "round", "study", "gapcheck", "selftest")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--preset", choices=["burgers-switch"], help="problem preset")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed for randomized checks (u64)")
    common.add_argument("--nx", type=int, help="number of cells")
    common.add_argument("--cfl", type=float, help="CFL number in (0, 1]")
    common.add_argument("--kappa", type=float, help="relaxation parameter")
    p = argparse.ArgumentParser(prog="relaxround", description="Relax-and-round optimal switching on hyperbolic systems.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "forward solve for a fixed control",
        "optimize": "optimize the relaxed control",
        "round": "sum-up round a relaxed control and re-simulate",
        "study": "optimize, then round on a sequence of grids",
        "gapcheck": "trajectory distance against integrated deviation",
        "selftest": "adjoint gradient against finite differences",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _configure(args) -> RunConfig:
    cfg = load(args.config)
    cfg.override("problem", "preset", args.preset)
    cfg.override("problem", "nx", args.nx)
    cfg.override("problem", "cfl", args.cfl)
    cfg.override("problem", "kappa", args.kappa)
    cfg.override("run", "seed", args.seed)
    cfg.override("run", "out", args.out)
    return cfg


def _control(cfg: RunConfig, problem) -> RelaxedControl:
    path = cfg["control"]["beta_file"]
    if path:
        try:
            beta = art.read_relaxed_control(path, problem.spec.T)
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError(f"cannot load control file {path}: {exc}") from exc
        if beta.M != problem.spec.M:
            raise ConfigError(f"control file has {beta.M} modes, the problem has {problem.spec.M}")
        return beta
    return RelaxedControl.from_scalar(problem.control_grid, cfg["control"]["beta"])


def _eta_mass(traj, problem) -> np.ndarray:
    eta = observed(traj, problem.cost)
    return np.array([trapezoid_periodic(e, traj.sgrid.dx) for e in eta])


def _final_eta_rows(problem, finals):
    x = problem.sgrid.centers
    w = problem.cost.observation
    return [[x[k]] + [float(f[k] @ w) for f in finals] for k in range(x.size)]


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #


def cmd_solve(cfg: RunConfig, problem, out: Path) -> int:
    beta = _control(cfg, problem)
    traj = solve_forward(problem.spec, beta, problem.tgrid, problem.sgrid, problem.solver)
    mass = _eta_mass(traj, problem)
    every = cfg["run"]["csv_every"] or max(1, problem.tgrid.N_t // 100)
    art.write_trajectory_binary(out / "trajectory.bin", traj)
    art.write_trajectory_csv(out / "trajectory.csv", traj, every=every)
    drift = float(np.max(np.abs(mass - mass[0])) / max(abs(mass[0]), 1e-300)) if mass[0] != 0 else float(np.max(np.abs(mass)))
    art.write_json(
        out / "summary.json",
        {
            "solver": traj.solver_tag,
            "N_t": problem.tgrid.N_t,
            "N_x": problem.sgrid.N_x,
            "dt": problem.tgrid.dt,
            "dx": problem.sgrid.dx,
            "cost": tracking_cost(traj, problem.cost),
            "eta_mass": mass,
            "eta_mass_drift": drift,
            "sup_norm": float(np.max(np.abs(traj.data))),
            "csv_every": every,
            "config": cfg.as_dict(),
        },
    )
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, problem, out: Path) -> int:
    res = optimize_relaxed(problem, cfg.optimize_config())
    _, grad = ReducedCost(problem).value_and_gradient(res.beta)
    art.write_relaxed_control(out / "beta_star.csv", res.beta)
    art.write_iteration_log(out / "iterations.csv", res.log)
    art.write_gradient(out / "gradient.csv", grad)
    art.write_json(
        out / "optimize.json",
        {
            "J_star": res.J,
            "status": res.status,
            "stalled": res.status == "stalled",
            "iterations": res.iterations,
            "pg_norm": res.log[-1][3],
            "bang_bang_fraction": bang_bang_fraction(res.beta),
            "config": cfg.as_dict(),
        },
    )
    return EXIT_OK


def cmd_round(cfg: RunConfig, problem, out: Path) -> int:
    beta = _control(cfg, problem)
    rep = sum_up_rounding(beta, TimeGrid.from_dt(problem.spec.T, cfg["round"]["dt"]))
    J = ReducedCost(problem)
    art.write_binary_control(out / "alpha.csv", rep.binary)
    art.write_json(
        out / "round.json",
        {
            "dt": rep.grid.dt,
            "epsilon": rep.deviation,
            "bound": rep.bound,
            "J_beta": J(beta),
            "J_alpha": J(rep.binary),
            "config": cfg.as_dict(),
        },
    )
    return EXIT_OK


def cmd_study(cfg: RunConfig, problem, out: Path) -> int:
    res = optimize_relaxed(problem, cfg.optimize_config())
    report = relax_round(problem, res.beta, res.J, cfg["study"]["dt_sequence"])
    art.write_relaxed_control(out / "beta_star.csv", res.beta)
    art.write_iteration_log(out / "iterations.csv", res.log)
    art.write_report_csv(out / "report.csv", report.rows)
    for row, alpha in zip(report.rows, report.alphas):
        art.write_binary_control(out / f"alpha_k{row.k}.csv", alpha)
    star_final = ReducedCost(problem).state(res.beta).final
    x = problem.sgrid.centers
    eta0 = problem.spec.initial_data(x) @ problem.cost.observation
    prof = [[x[k], eta0[k], problem.cost.target[k], float(star_final[k] @ problem.cost.observation)] for k in range(x.size)]
    art.write_csv(out / "profiles.csv", ["x", "eta0", "target", "eta_relaxed_T"], prof)
    art.write_csv(
        out / "final_states.csv",
        ["x"] + [f"eta_k{r.k}" for r in report.rows],
        _final_eta_rows(problem, report.final_states),
    )
    art.write_json(
        out / "report.json",
        {
            "J_star": res.J,
            "status": res.status,
            "iterations": res.iterations,
            "bang_bang_fraction": bang_bang_fraction(res.beta),
            "bounds_hold": report.check_bounds(),
            "rows": [r.as_dict() for r in report.rows],
            "config": cfg.as_dict(),
        },
    )
    return EXIT_OK


def cmd_gapcheck(cfg: RunConfig, problem, out: Path) -> int:
    g = cfg["gapcheck"]
    beta = smooth_beta(problem.tgrid) if g["beta"] == "smooth" else _control(cfg, problem)
    report = gap_study(problem, beta, g["dt_sequence"], include_identity=g["include_identity"])
    art.write_gap_csv(out / "gap.csv", report.rows)
    art.write_json(
        out / "gap.json",
        {
            "rows": [vars(r) for r in report.rows],
            "max_ratio": report.max_ratio,
            "decay": report.decay,
            "config": cfg.as_dict(),
        },
    )
    return EXIT_OK


def cmd_selftest(cfg: RunConfig, problem, out: Path) -> int:
    res = gradient_selftest(problem, n_directions=cfg["run"]["selftest_directions"], seed=cfg["run"]["seed"])
    art.write_json(out / "selftest.json", {**res, "config": cfg.as_dict()})
    status = "ok" if res["ok"] else "FAILED"
    print(f"gradient selftest {status}: max relative error {res['max_rel_err']:.3e}")
    return EXIT_OK if res["ok"] else EXIT_NUMERICAL


HANDLERS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "round": cmd_round,
    "study": cmd_study,
    "gapcheck": cmd_gapcheck,
    "selftest": cmd_selftest,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _configure(args)
        problem = cfg.problem()
        if cfg["control"]["beta_file"] and args.command in ("solve", "round"):
            _control(cfg, problem)  # fail before any output is written
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["run"]["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        art.write_text(out / "config.ini", cfg.to_text())
        return HANDLERS[args.command](cfg, problem, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FixedPointError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
