"""Solution oracle from the forward characteristic flow.

The solution is the fixed point of the integral map that follows each
characteristic backwards to the initial line or a lateral boundary, takes the
initial value there or the boundary coupling applied to the outflow traces, and
adds the source integrated along the curve. Iterates live on the tensor grid of
solver time levels and the extended spatial nodes ``[0, cell centers..., L]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    BinaryControl,
    RelaxedControl,
    SpaceGrid,
    StateTrajectory,
    SystemSpec,
    TimeGrid,
    dag_norm,
)


class FixedPointError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


# --------------------------------------------------------------------------- #
# Single characteristic curves
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class CharacteristicCurve:
    anchor: tuple
    times: np.ndarray
    positions: np.ndarray
    exit_time: float
    exit_face: str  # "initial" | "left" | "right"


def _rk4(lam_i, s, h):
    k1 = lam_i(s)
    k2 = lam_i(s + 0.5 * h * k1)
    k3 = lam_i(s + 0.5 * h * k2)
    k4 = lam_i(s + h * k3)
    return s + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _component_speed(spec: SystemSpec, i: int):
    def lam_i(x):
        return np.asarray(spec.lam(np.asarray(x, dtype=float)))[..., i]

    return lam_i


def _inside(s, L):
    return (s >= 0.0) & (s <= L)


def _bisect_exit(lam_i, s0, h_full, L, tol):
    """Largest backward step ``h`` in [0, h_full] keeping the RK4 endpoint inside [0, L]."""
    lo = np.zeros_like(s0)
    hi = np.array(h_full, dtype=float, copy=True)
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        ok = _inside(_rk4(lam_i, s0, -mid), L)
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return 0.5 * (lo + hi)


def _starts_outward(lam_i, s, L):
    """Anchors on a boundary whose backward curve leaves the domain at once."""
    lam = lam_i(s)
    return ((s <= 0.0) & (lam > 0)) | ((s >= L) & (lam < 0))


def trace_characteristic(spec: SystemSpec, i: int, tau: float, sigma: float, dt_ode: float) -> CharacteristicCurve:
    """Integrate ``ds/dt = lambda_i(s)`` backwards from ``(tau, sigma)`` with RK4 until it leaves."""
    lam_i = _component_speed(spec, i)
    L = spec.L
    tol = 1e-12 * spec.T
    times, pos = [tau], [sigma]
    s, t = np.array([sigma], dtype=float), tau
    if _starts_outward(lam_i, s, L)[0]:
        face = "left" if sigma <= 0 else "right"
        return CharacteristicCurve((tau, sigma), np.array(times), np.array(pos), tau, face)
    while t > 0.0:
        h = min(dt_ode, t)
        nxt = _rk4(lam_i, s, -h)
        if not _inside(nxt, L)[0]:
            hstar = _bisect_exit(lam_i, s, np.array([h]), L, tol)
            t_exit = t - float(hstar[0])
            s_exit = 0.0 if nxt[0] < 0.0 else L
            times.append(t_exit)
            pos.append(s_exit)
            face = "left" if s_exit == 0.0 else "right"
            return CharacteristicCurve((tau, sigma), np.array(times), np.array(pos), t_exit, face)
        s, t = nxt, t - h
        if t < tol:
            t = 0.0
        times.append(t)
        pos.append(float(s[0]))
    return CharacteristicCurve((tau, sigma), np.array(times), np.array(pos), 0.0, "initial")


# --------------------------------------------------------------------------- #
# Batched geometry on the evaluation grid
# --------------------------------------------------------------------------- #


@dataclass
class _Geometry:
    """Backward curves from every extended node, shared by all time levels.

    The speeds do not depend on time, so the curve through ``(tau_m, x_k)`` is
    the curve through ``(T', x_k)`` shifted in time. ``pos[l, k]`` is the
    position ``l`` steps back (NaN after exit) and ``theta[k]`` the backward
    duration until the curve hits a lateral boundary (inf if it never does
    within the horizon).
    """

    pos: np.ndarray
    theta: np.ndarray
    exit_node: np.ndarray  # 0 for x = 0, -1 for x = L


def _trace_all(spec: SystemSpec, i: int, x_ext: np.ndarray, dt: float, nsteps: int) -> _Geometry:
    lam_i = _component_speed(spec, i)
    L = spec.L
    K = x_ext.size
    pos = np.full((nsteps + 1, K), np.nan)
    pos[0] = x_ext
    theta = np.full(K, np.inf)
    exit_node = np.zeros(K, dtype=np.int64)
    alive = ~_starts_outward(lam_i, x_ext, L)
    out0 = ~alive
    theta[out0] = 0.0
    exit_node[out0] = np.where(x_ext[out0] <= 0.0, 0, -1)
    s = x_ext.copy()
    for l in range(1, nsteps + 1):
        if not np.any(alive):
            break
        idx = np.flatnonzero(alive)
        nxt = _rk4(lam_i, s[idx], -dt)
        ok = _inside(nxt, L)
        if np.any(~ok):
            gone = idx[~ok]
            h = _bisect_exit(lam_i, s[gone], np.full(gone.size, dt), L, 1e-12 * spec.T)
            theta[gone] = (l - 1) * dt + h
            exit_node[gone] = np.where(nxt[~ok] < 0.0, 0, -1)
            # an exit landing on the level itself keeps that node on the boundary
            at_level = h >= dt * (1.0 - 1e-9)
            theta[gone[at_level]] = l * dt
            pos[l, gone[at_level]] = np.where(exit_node[gone[at_level]] == 0, 0.0, L)
            alive[gone] = False
        keep = idx[ok]
        s[keep] = nxt[ok]
        pos[l, keep] = nxt[ok]
    return _Geometry(pos, theta, exit_node)


def _interp_space(values: np.ndarray, x_ext: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``values`` (K, ...) along the first axis at positions ``s``."""
    k = np.clip(np.searchsorted(x_ext, s, side="right") - 1, 0, x_ext.size - 2)
    w = (s - x_ext[k]) / (x_ext[k + 1] - x_ext[k])
    w = w.reshape(w.shape + (1,) * (values.ndim - 1))
    return (1.0 - w) * values[k] + w * values[k + 1]


def _interp_levels(y_ext: np.ndarray, levels: np.ndarray, x_ext: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``y_ext[levels[l]]`` interpolated in space at ``P[l, :]`` for every row ``l`` at once."""
    k = np.clip(np.searchsorted(x_ext, P, side="right") - 1, 0, x_ext.size - 2)
    w = ((P - x_ext[k]) / (x_ext[k + 1] - x_ext[k]))[..., None]
    lv = levels[:, None]
    return (1.0 - w) * y_ext[lv, k] + w * y_ext[lv, k + 1]


# --------------------------------------------------------------------------- #
# The integral map
# --------------------------------------------------------------------------- #


@dataclass
class FixedPointDiagnostics:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    K: float = 0.0

    @property
    def contraction_factors(self) -> list:
        r = self.residuals
        return [r[k] / r[k - 1] for k in range(1, len(r)) if r[k - 1] > 0]

    @property
    def contraction_factor(self) -> float:
        f = self.contraction_factors
        return max(f) if f else 0.0


class CharacteristicFlow:
    """Precomputed characteristic geometry for one system, control and grid."""

    def __init__(
        self,
        spec: SystemSpec,
        beta: RelaxedControl | BinaryControl,
        tgrid: TimeGrid,
        sgrid: SpaceGrid,
        u=None,
    ):
        if isinstance(beta, BinaryControl):
            beta = beta.to_relaxed()
        self.spec, self.tgrid, self.sgrid, self.u = spec, tgrid, sgrid, u
        self.rows = beta.on_grid(tgrid).values
        self.x_ext = np.concatenate([[0.0], sgrid.centers, [sgrid.L]])
        self.geom = [_trace_all(spec, i, self.x_ext, tgrid.dt, tgrid.N_t) for i in range(spec.n)]
        self.y0_ext = np.asarray(spec.initial_data(self.x_ext), dtype=float).reshape(self.x_ext.size, spec.n)
        self._check_acyclic()

    def _check_acyclic(self):
        # an outflow-boundary curve must leave before the previous time level,
        # otherwise the boundary recursion within one level would be circular
        for i in range(self.spec.n):
            k = 0 if i < self.spec.r else -1
            if self.geom[i].theta[k] < self.tgrid.dt * (1 - 1e-12):
                raise RuntimeError("boundary recursion is not acyclic on this grid")

    def _source_values(self, y_vals, step_rows):
        """sum_j beta_j f_j at stacked states ``y_vals`` (..., n) with per-point rows (..., M)."""
        spec = self.spec
        out = np.zeros_like(y_vals)
        for j in range(spec.M):
            out += step_rows[..., j : j + 1] * spec.source(y_vals, self._u_at(), j)
        return out

    def _u_at(self):
        return self.u

    def _outflow(self, psi, level_lo, frac):
        """Outflow traces (y^-(t, 0), y^+(t, L)) at ``t = t_lo + frac*dt`` for each point."""
        r = self.spec.r
        lo = np.concatenate([psi[level_lo, 0, :r], psi[level_lo, -1, r:]], axis=-1)
        hi_level = np.minimum(level_lo + 1, self.tgrid.N_t)
        hi = np.concatenate([psi[hi_level, 0, :r], psi[hi_level, -1, r:]], axis=-1)
        # levels above the current one are not computed yet and carry no weight
        hi = np.where((frac > 0.0)[..., None], hi, lo)
        return lo + frac[..., None] * (hi - lo)

    def apply(self, y_ext: np.ndarray) -> np.ndarray:
        """One application of the integral map to an extended-grid iterate."""
        spec, tg = self.spec, self.tgrid
        dt, nt = tg.dt, tg.N_t
        n, r = spec.n, spec.r
        K = self.x_ext.size
        G = spec.boundary_matrix
        psi = np.full_like(y_ext, np.nan)
        psi[0] = self.y0_ext
        # outflow nodes first, then everything else, so boundary values at the
        # current level are known before any curve reaches them
        order = []
        for i in range(n):
            out_k = 0 if i < r else K - 1
            order.append((i, np.array([out_k])))
        for i in range(n):
            out_k = 0 if i < r else K - 1
            order.append((i, np.setdiff1d(np.arange(K), [out_k])))

        for m in range(1, nt + 1):
            tau = m * dt
            for i, ks in order:
                psi[m, ks, i] = self._evaluate(y_ext, psi, m, tau, i, ks, G)
        return psi

    def _evaluate(self, y_ext, psi, m, tau, i, ks, G):
        spec, dt = self.spec, self.tgrid.dt
        geom = self.geom[i]
        theta = geom.theta[ks]
        to_initial = theta >= tau * (1 - 1e-12)
        theta_eff = np.where(to_initial, tau, theta)
        nfull = np.minimum(np.floor(theta_eff / dt * (1 + 1e-12)).astype(np.int64), m)
        partial = theta_eff - nfull * dt
        partial = np.where(partial < 1e-12 * dt, 0.0, partial)

        # nodes along the curve at whole time levels: l = 0..nfull
        lmax = int(nfull.max()) if ks.size else 0
        ls = np.arange(lmax + 1)
        valid = ls[:, None] <= nfull[None, :]
        P = geom.pos[: lmax + 1][:, ks]
        P = np.where(valid, P, 0.0)
        levels = m - ls
        yv = _interp_levels(y_ext, levels, self.x_ext, P)
        # step index of the segment between node l and node l+1
        seg_steps = np.clip(levels - 1, 0, None)
        total = np.zeros(ks.size)
        if lmax > 0:
            rows_seg = self.rows[seg_steps[:lmax]]  # (lmax, M)
            f_lo = self._source_values(yv[:-1], np.broadcast_to(rows_seg[:, None, :], yv[:-1].shape[:2] + rows_seg.shape[-1:]))
            f_hi = self._source_values(yv[1:], np.broadcast_to(rows_seg[:, None, :], yv[1:].shape[:2] + rows_seg.shape[-1:]))
            seg = 0.5 * dt * (f_lo[..., i] + f_hi[..., i])
            seg_valid = ls[1:, None] <= nfull[None, :]
            total += np.sum(np.where(seg_valid, seg, 0.0), axis=0)

        # boundary exit or initial line
        value = np.empty(ks.size)
        t_exit = tau - theta_eff
        init = to_initial
        if np.any(init):
            pos0 = P[nfull[init], np.flatnonzero(init)]
            value[init] = np.asarray(spec.initial_data(pos0), dtype=float).reshape(-1, spec.n)[:, i]
        bnd = ~init
        if np.any(bnd):
            te = t_exit[bnd]
            # snap exit times within rounding of a level onto it
            lvl = te / dt
            near = np.rint(lvl)
            lvl = np.where(np.abs(lvl - near) < 1e-9, near, lvl)
            lo = np.minimum(np.floor(lvl).astype(np.int64), self.tgrid.N_t - 1)
            frac = np.clip(lvl - lo, 0.0, 1.0)
            if np.any(lo + (frac > 0) > m):
                raise RuntimeError("boundary recursion is not acyclic on this grid")
            traces = self._outflow(psi, lo, frac)
            inflow = traces @ G.T + np.array([spec.d(t) for t in te]).reshape(-1, spec.n)
            value[bnd] = inflow[:, i]
            # partial segment from the last whole level down to the exit point
            bidx = np.flatnonzero(bnd)
            has_part = partial[bidx] > 0
            if np.any(has_part):
                pb = bidx[has_part]
                node = nfull[pb]
                y_node = yv[node, pb]
                exit_k = geom.exit_node[ks[pb]]
                lo_e, fr_e = lo[has_part], frac[has_part]
                y_lo = y_ext[lo_e, exit_k]
                y_hi = y_ext[np.minimum(lo_e + 1, self.tgrid.N_t), exit_k]
                y_exit = (1.0 - fr_e)[:, None] * y_lo + fr_e[:, None] * y_hi
                step = np.clip(m - node - 1, 0, None)
                rws = self.rows[step]
                f_a = self._source_values(y_node, rws)[:, i]
                f_b = self._source_values(y_exit, rws)[:, i]
                total[pb] += 0.5 * partial[pb] * (f_a + f_b)
        return value + total

    def to_trajectory(self, y_ext: np.ndarray, tag: str = "characteristics") -> StateTrajectory:
        return StateTrajectory(self.tgrid, self.sgrid, y_ext[:, 1:-1, :], solver_tag=tag, meta={"ext": y_ext})

    def extend(self, y: StateTrajectory) -> np.ndarray:
        """Extended-grid array from a trajectory; boundary nodes copy the adjacent cells."""
        if "ext" in y.meta:
            return y.meta["ext"]
        d = y.data
        return np.concatenate([d[:, :1], d, d[:, -1:]], axis=1)


def auto_K(spec: SystemSpec, flow: CharacteristicFlow, samples: int = 256, seed: int = 0) -> float:
    """Weight exponent making the integral map a 1/2-contraction in the weighted norm.

    ``K = 2 * L_f * max(1, ||G||_1) * exp(L_lambda * T)`` with ``L_f`` the largest
    sampled column-sum norm of the aggregated source Jacobian over the range of
    the initial data (widened by half its span on each side).
    """
    rng = np.random.default_rng(seed)
    y0 = flow.y0_ext
    lo, hi = y0.min(axis=0), y0.max(axis=0)
    span = np.maximum(hi - lo, 1e-3)
    lo, hi = lo - 0.5 * span, hi + 0.5 * span
    ys = lo + (hi - lo) * rng.random((samples, spec.n))
    rows = np.unique(flow.rows, axis=0)
    Lf = 0.0
    for row in rows:
        jac = spec.aggregated_jacobian(ys, flow.u, row)
        Lf = max(Lf, float(np.max(np.sum(np.abs(jac), axis=-2))))
    Gn = float(np.max(np.sum(np.abs(spec.boundary_matrix), axis=0))) if spec.n else 0.0
    return 2.0 * Lf * max(1.0, Gn) * math.exp(spec.lipschitz_lambda * spec.T)


def apply_psi(
    y: StateTrajectory,
    spec: SystemSpec,
    beta: RelaxedControl | BinaryControl,
    K: float,
    flow: Optional[CharacteristicFlow] = None,
) -> tuple[StateTrajectory, float]:
    """One application of the integral map; returns the image and its weighted distance to ``y``."""
    flow = flow or CharacteristicFlow(spec, beta, y.tgrid, y.sgrid)
    if flow.tgrid != y.tgrid or flow.sgrid != y.sgrid:
        raise ValueError("evaluation outside stored trajectory")
    new = flow.apply(flow.extend(y))
    out = flow.to_trajectory(new)
    return out, dag_norm(out - y, K)


def solve_fixed_point(
    spec: SystemSpec,
    beta: RelaxedControl | BinaryControl,
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    K: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 100,
    u=None,
) -> tuple[StateTrajectory, FixedPointDiagnostics]:
    """Picard iteration from zero.

    ``iterations`` counts the map applications before the one that confirms
    the fixed point (residual <= tol).
    """
    flow = CharacteristicFlow(spec, beta, tgrid, sgrid, u=u)
    if K is None:
        K = auto_K(spec, flow)
    diag = FixedPointDiagnostics(K=K)
    y = np.zeros((tgrid.N_t + 1, flow.x_ext.size, spec.n))
    for it in range(1, max_iter + 1):
        new = flow.apply(y)
        res = dag_norm(flow.to_trajectory(new - y), K)
        diag.residuals.append(res)
        y = new
        if res <= tol:
            diag.iterations = it - 1
            return flow.to_trajectory(y), diag
    raise FixedPointError(f"fixed-point iteration did not converge; last residual {res:.3e}", res)
