"""Pure-numpy versions of the compiled sweeps (same signatures and results)."""

import numpy as np


def jinxin_forward(y0, w_step, s_step, nu, c, a):
    y0 = np.ascontiguousarray(y0, dtype=float)
    nt = len(w_step)
    out = np.empty((nt + 1,) + y0.shape)
    out[0] = y0
    for n in range(nt):
        y = out[n]
        lm = y[:, 0] - nu * (y[:, 0] - np.roll(y[:, 0], -1))
        rp = y[:, 1] - nu * (y[:, 1] - np.roll(y[:, 1], 1))
        eta = (rp - lm) / (2.0 * a)
        xi = 0.5 * (lm + rp)
        xi = (xi + c * w_step[n] * eta * eta) / (1.0 + c * s_step[n])
        out[n + 1, :, 0] = xi - a * eta
        out[n + 1, :, 1] = xi + a * eta
    return out


def jinxin_adjoint(traj, w_step, s_step, nu, c, a, mu_final):
    nt = len(w_step)
    mu = np.empty_like(traj)
    mu[nt] = mu_final
    for n in range(nt - 1, -1, -1):
        den = 1.0 + c * s_step[n]
        eta = (traj[n + 1, :, 1] - traj[n + 1, :, 0]) / (2.0 * a)
        mxi = mu[n + 1, :, 0] + mu[n + 1, :, 1]
        meta = a * (mu[n + 1, :, 1] - mu[n + 1, :, 0]) + mxi * 2.0 * c * w_step[n] * eta / den
        mxi = mxi / den
        v0 = 0.5 * mxi - meta / (2.0 * a)
        v1 = 0.5 * mxi + meta / (2.0 * a)
        mu[n, :, 0] = v0 + nu * (np.roll(v0, 1) - v0)
        mu[n, :, 1] = v1 + nu * (np.roll(v1, -1) - v1)
    return mu
