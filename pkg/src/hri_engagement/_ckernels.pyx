# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled crossing-time kernel. Same arithmetic as ``_pykernels``."""
import numpy as np

from libc.math cimport INFINITY


def crossing_times(const long long[::1] offsets, const double[::1] durations,
                   const double[::1] slopes, double t_max):
    cdef Py_ssize_t n_users = offsets.shape[0] - 1
    out_arr = np.empty(n_users, dtype=np.float64)
    capped_arr = np.zeros(n_users, dtype=np.uint8)
    cdef double[::1] out = out_arr
    cdef unsigned char[::1] capped = capped_arr
    cdef Py_ssize_t i, k, lo, hi
    cdef double el, t, hit, a, d, tc
    with nogil:
        for i in range(n_users):
            lo = offsets[i]
            hi = offsets[i + 1]
            el = 1.0
            t = 0.0
            hit = INFINITY
            for k in range(lo, hi):
                a = slopes[k]
                d = durations[k]
                if a < 0.0:
                    tc = t + el / -a
                    if k == hi - 1 or tc <= t + d:
                        hit = tc
                        break
                el = el + a * d
                t = t + d
            if hit > t_max:
                out[i] = t_max
                capped[i] = 1
            else:
                out[i] = hit
    return out_arr, capped_arr
