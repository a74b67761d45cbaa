# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Gaussian field kernels: value, gradient, Laplacian of the
kernel sum over a sample set, evaluated at a batch of points."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

BACKEND = "cython"


def eval_fields(const double[:, ::1] samples, const double[:, ::1] points, double sigma):
    """Same contract as qipfseg.kernels._ref.eval_fields."""
    cdef Py_ssize_t n = samples.shape[0]
    cdef Py_ssize_t d = samples.shape[1]
    cdef Py_ssize_t p = points.shape[0]

    values_arr = np.zeros(p, dtype=np.float64)
    grads_arr = np.zeros((p, d), dtype=np.float64)
    laps_arr = np.zeros(p, dtype=np.float64)
    cdef double[::1] values = values_arr
    cdef double[:, ::1] grads = grads_arr
    cdef double[::1] laps = laps_arr

    cdef double inv_s2 = 1.0 / (sigma * sigma)
    cdef double r2, w, diff, acc_v, acc_l
    cdef Py_ssize_t i, j, k

    for i in range(p):
        acc_v = 0.0
        acc_l = 0.0
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                diff = samples[j, k] - points[i, k]
                r2 += diff * diff
            w = exp(-0.5 * r2 * inv_s2)
            acc_v += w
            acc_l += w * (r2 * inv_s2 - d)
            for k in range(d):
                grads[i, k] += w * (samples[j, k] - points[i, k])
        values[i] = acc_v / n
        laps[i] = acc_l * inv_s2 / n
        for k in range(d):
            grads[i, k] *= inv_s2 / n

    return values_arr, grads_arr, laps_arr
