# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sweeps for the periodic Jin-Xin system in characteristic variables.

State layout: ``y[..., 0] = xi - a*eta`` (speed -a), ``y[..., 1] = xi + a*eta`` (speed +a).
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def jinxin_forward(double[:, ::1] y0, double[::1] w_step, double[::1] s_step,
                   double nu, double c, double a):
    cdef Py_ssize_t nt = w_step.shape[0]
    cdef Py_ssize_t nx = y0.shape[0]
    out_arr = np.empty((nt + 1, nx, 2), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[::1] lm = np.empty(nx, dtype=np.float64)
    cdef double[::1] rp = np.empty(nx, dtype=np.float64)
    cdef Py_ssize_t n, k, km, kp
    cdef double eta, xi, w, s, den
    for k in range(nx):
        out[0, k, 0] = y0[k, 0]
        out[0, k, 1] = y0[k, 1]
    for n in range(nt):
        w = w_step[n]
        s = s_step[n]
        den = 1.0 + c * s
        for k in range(nx):
            kp = k + 1 if k + 1 < nx else 0
            km = k - 1 if k > 0 else nx - 1
            lm[k] = out[n, k, 0] - nu * (out[n, k, 0] - out[n, kp, 0])
            rp[k] = out[n, k, 1] - nu * (out[n, k, 1] - out[n, km, 1])
        for k in range(nx):
            eta = (rp[k] - lm[k]) / (2.0 * a)
            xi = 0.5 * (lm[k] + rp[k])
            xi = (xi + c * w * eta * eta) / den
            out[n + 1, k, 0] = xi - a * eta
            out[n + 1, k, 1] = xi + a * eta
    return out_arr


def jinxin_adjoint(double[:, :, ::1] traj, double[::1] w_step, double[::1] s_step,
                   double nu, double c, double a, double[:, ::1] mu_final):
    """Transpose sweep of ``jinxin_forward``; returns duals of every time level."""
    cdef Py_ssize_t nt = w_step.shape[0]
    cdef Py_ssize_t nx = traj.shape[1]
    mu_arr = np.empty((nt + 1, nx, 2), dtype=np.float64)
    cdef double[:, :, ::1] mu = mu_arr
    cdef double[::1] v0 = np.empty(nx, dtype=np.float64)
    cdef double[::1] v1 = np.empty(nx, dtype=np.float64)
    cdef Py_ssize_t n, k, km, kp
    cdef double eta, mxi, meta, den
    for k in range(nx):
        mu[nt, k, 0] = mu_final[k, 0]
        mu[nt, k, 1] = mu_final[k, 1]
    for n in range(nt - 1, -1, -1):
        den = 1.0 + c * s_step[n]
        for k in range(nx):
            eta = (traj[n + 1, k, 1] - traj[n + 1, k, 0]) / (2.0 * a)
            mxi = mu[n + 1, k, 0] + mu[n + 1, k, 1]
            meta = a * (mu[n + 1, k, 1] - mu[n + 1, k, 0]) + mxi * 2.0 * c * w_step[n] * eta / den
            mxi = mxi / den
            v0[k] = 0.5 * mxi - meta / (2.0 * a)
            v1[k] = 0.5 * mxi + meta / (2.0 * a)
        for k in range(nx):
            kp = k + 1 if k + 1 < nx else 0
            km = k - 1 if k > 0 else nx - 1
            mu[n, k, 0] = v0[k] + nu * (v0[km] - v0[k])
            mu[n, k, 1] = v1[k] + nu * (v1[kp] - v1[k])
    return mu_arr
