# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the pure numpy kernels in ``_pykernels``.

Same contracts: deterministic functions of their inputs, randomness is
supplied as pre-drawn arrays by the caller.
"""

import numpy as np

BACKEND = "c"


def srswor_indices(long long n, long long k, double[::1] uniforms):
    out = np.arange(n, dtype=np.int64)
    cdef long long[::1] pool = out
    cdef long long i, j, span, tmp
    for i in range(k):
        span = n - i
        j = i + <long long>(uniforms[i] * span)
        if j >= n:
            j = n - 1
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    return out[:k].copy()


def systematic_positions(double[::1] cum, double start):
    cdef long long size = cum.shape[0]
    cdef long long m = <long long>(cum[size - 1] + 0.5)
    out = np.empty(m, dtype=np.int64)
    cdef long long[::1] sel = out
    cdef long long i, pos = 0
    cdef double point
    for i in range(m):
        point = start + i
        while pos < size and cum[pos] < point:
            pos += 1
        sel[i] = pos
    return out


def replicate_sums(double[::1] contrib, long long[:, ::1] draws, double factor):
    cdef long long b_count = draws.shape[0]
    cdef long long width = draws.shape[1]
    out = np.empty(b_count, dtype=np.float64)
    cdef double[::1] sums = out
    cdef long long b, d
    cdef double acc
    for b in range(b_count):
        acc = 0.0
        for d in range(width):
            acc += contrib[draws[b, d]]
        sums[b] = acc * factor
    return out
