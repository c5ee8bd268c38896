# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics mirror :mod:`itostrat._pykernels` exactly."""

import numpy as np

from libc.math cimport fabs


def neumaier_accumulate(double[::1] total, double[::1] comp, const double[::1] x):
    cdef Py_ssize_t i, n = total.shape[0]
    cdef double s, v, t
    for i in range(n):
        s = total[i]
        v = x[i]
        t = s + v
        if fabs(s) >= fabs(v):
            comp[i] += (s - t) + v
        else:
            comp[i] += (v - t) + s
        total[i] = t


def block_sums(const double[:, ::1] values, Py_ssize_t factor):
    cdef Py_ssize_t rows = values.shape[0], steps = values.shape[1]
    cdef Py_ssize_t nb = steps // factor, r, b, j
    cdef double s, c, v, t
    out_arr = np.empty((rows, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for r in range(rows):
        for b in range(nb):
            s = 0.0
            c = 0.0
            for j in range(b * factor, (b + 1) * factor):
                v = values[r, j]
                t = s + v
                if fabs(s) >= fabs(v):
                    c += (s - t) + v
                else:
                    c += (v - t) + s
                s = t
            out[r, b] = s + c
    return out_arr


def compensated_cumsum(const double[:, ::1] values):
    cdef Py_ssize_t rows = values.shape[0], steps = values.shape[1], r, j
    cdef double s, c, v, t
    out_arr = np.zeros((rows, steps + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for r in range(rows):
        s = 0.0
        c = 0.0
        for j in range(steps):
            v = values[r, j]
            t = s + v
            if fabs(s) >= fabs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
            out[r, j + 1] = s + c
    return out_arr


def linear_scalar_paths(
    const double[::1] x0,
    double mu,
    const double[::1] sigma,
    const double[:, :, ::1] dW,
    double dt,
    int scheme,
    double corr_weight,
):
    cdef Py_ssize_t P = dW.shape[0], M = dW.shape[1], S = dW.shape[2]
    cdef Py_ssize_t p, k, i
    cdef double x, xbar, n0, n1, half_s2 = 0.0
    for i in range(M):
        half_s2 += 0.5 * sigma[i] * sigma[i]
    out_arr = np.empty((P, S + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for p in range(P):
        x = x0[p]
        out[p, 0] = x
        for k in range(S):
            n0 = 0.0
            for i in range(M):
                n0 += sigma[i] * x * dW[p, i, k]
            if scheme == 0:
                x = x + dt * (mu * x + corr_weight * half_s2 * x) + n0
            else:
                xbar = x + n0
                n1 = 0.0
                for i in range(M):
                    n1 += (sigma[i] * x + sigma[i] * xbar) * dW[p, i, k]
                x = x + dt * (mu * x) + 0.5 * n1
            out[p, k + 1] = x
    return out_arr
