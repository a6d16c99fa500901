"""CSV, JSON and binary writers for trajectories, controls and reports.

Every file is written to a temporary sibling and moved into place with
``os.replace`` so readers never see a half-written artifact.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import BinaryControl, RelaxedControl, SpaceGrid, StateTrajectory, TimeGrid

TRAJ_MAGIC = b"RRTJ"
# magic, n, N_t+1, N_x as uint32; dt, dx as float64 -> 32 bytes
TRAJ_HEADER = struct.Struct("<4s3I2d")


def _atomic_write(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return _atomic_write(path, buf.getvalue().encode())


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    return _atomic_write(path, text.encode())


# --------------------------------------------------------------------------- #
# Trajectories
# --------------------------------------------------------------------------- #


def write_trajectory_csv(path, traj: StateTrajectory, every: int = 1) -> Path:
    """Long-format CSV ``t,x,component,value``; ``every`` thins the time levels (the final level is kept)."""
    every = max(1, int(every))
    levels = list(range(0, traj.tgrid.N_t + 1, every))
    if levels[-1] != traj.tgrid.N_t:
        levels.append(traj.tgrid.N_t)
    t = traj.tgrid.nodes.tolist()
    x = traj.sgrid.centers.tolist()
    buf = io.StringIO()
    buf.write("t,x,component,value\n")
    for m in levels:
        for k in range(traj.sgrid.N_x):
            for i in range(traj.n):
                buf.write(f"{t[m]!r},{x[k]!r},{i},{float(traj.data[m, k, i])!r}\n")
    return _atomic_write(path, buf.getvalue().encode())


def write_trajectory_binary(path, traj: StateTrajectory) -> Path:
    header = TRAJ_HEADER.pack(TRAJ_MAGIC, traj.n, traj.tgrid.N_t + 1, traj.sgrid.N_x, traj.tgrid.dt, traj.sgrid.dx)
    body = np.ascontiguousarray(traj.data, dtype="<f8").tobytes()
    return _atomic_write(path, header + body)


def read_trajectory_binary(path) -> StateTrajectory:
    raw = Path(path).read_bytes()
    if len(raw) < TRAJ_HEADER.size:
        raise ValueError("truncated trajectory file")
    magic, n, nt1, nx, dt, dx = TRAJ_HEADER.unpack_from(raw)
    if magic != TRAJ_MAGIC:
        raise ValueError("not a trajectory dump")
    data = np.frombuffer(raw, dtype="<f8", offset=TRAJ_HEADER.size)
    if data.size != nt1 * nx * n:
        raise ValueError("trajectory size does not match header")
    tgrid = TimeGrid(dt * (nt1 - 1), nt1 - 1)
    sgrid = SpaceGrid(dx * nx, nx)
    return StateTrajectory(tgrid, sgrid, data.reshape(nt1, nx, n).astype(float), solver_tag="file")


# --------------------------------------------------------------------------- #
# Controls, gradients and reports
# --------------------------------------------------------------------------- #


def write_relaxed_control(path, beta: RelaxedControl) -> Path:
    starts = beta.grid.nodes[:-1]
    header = ["interval_index", "t_start"] + [f"beta_{j}" for j in range(beta.M)]
    return write_csv(path, header, ([k, starts[k], *beta.values[k]] for k in range(beta.grid.N_t)))


def read_relaxed_control(path, T: float) -> RelaxedControl:
    header, rows = read_csv(path)
    cols = [c for c in header if c.startswith("beta_")]
    if not cols or header[:2] != ["interval_index", "t_start"]:
        raise ValueError(f"{path}: expected columns interval_index,t_start,beta_0,...")
    values = np.array([[float(v) for v in r[2 : 2 + len(cols)]] for r in rows])
    return RelaxedControl(TimeGrid(T, len(rows)), values)


def write_binary_control(path, alpha: BinaryControl) -> Path:
    starts = alpha.grid.nodes[:-1]
    return write_csv(
        path, ["interval_index", "t_start", "mode"], ([k, starts[k], int(alpha.active_mode[k])] for k in range(alpha.grid.N_t))
    )


def write_gradient(path, grad) -> Path:
    starts = grad.grid.nodes[:-1]
    return write_csv(path, ["interval_index", "t_start", "value"], ([k, starts[k], v] for k, v in enumerate(grad.values)))


REPORT_COLUMNS = ("k", "dt", "epsilon", "J_v", "abs_gap", "rel_gap")


def write_report_csv(path, rows) -> Path:
    return write_csv(path, REPORT_COLUMNS, ([getattr(r, c) for c in REPORT_COLUMNS] for r in rows))


def write_iteration_log(path, log) -> Path:
    return write_csv(path, ["iter", "J", "step_size", "pg_norm"], log)


def write_gap_csv(path, rows) -> Path:
    return write_csv(path, ["dt", "epsilon", "distance", "ratio"], ((r.dt, r.epsilon, r.distance, r.ratio) for r in rows))


def write_text(path, text: str) -> Path:
    return _atomic_write(path, text.encode())
