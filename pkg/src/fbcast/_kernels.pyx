# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contracts as ``fbcast._fallback``."""
from libc.math cimport log, pow, M_PI
from libc.stdint cimport uint64_t

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double unit(uint64_t key, uint64_t j) nogil:
    return (<double>(mix64(key + j * GOLDEN) >> 11) + 0.5) * INV53


def mc_outage_count(uint64_t seed, long start, long stop, double lam,
                    double area_count, double half_exp, double gamma_tx,
                    double threshold, double tail):
    cdef uint64_t seed_m = mix64(seed)
    cdef uint64_t key, j
    cdef long s, count = 0
    cdef double area, agg, w, scale = M_PI * lam
    cdef bint quartic = half_exp == 2.0
    with nogil:
        for s in range(start, stop):
            key = mix64(seed_m ^ (<uint64_t>(s + 1) * GOLDEN))
            j = 1
            area = 0.0
            agg = 0.0
            while True:
                area = area + (-log(unit(key, j)))
                if area > area_count:
                    break
                if quartic:
                    w = scale / area
                    w = w * w
                else:
                    w = pow(area / scale, -half_exp)
                agg = agg + (-log(unit(key, j + 1))) * w
                j += 2
            if gamma_tx * (agg + tail) <= threshold:
                count += 1
    return count


def capped_simplex_shift(raw, double total, double tol):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(raw, dtype=np.float64)
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double lo, hi, mid, acc, v
    if n == 0:
        raise ValueError("empty input")
    lo = x[0]
    hi = x[0]
    for i in range(n):
        if x[i] < lo:
            lo = x[i]
        if x[i] > hi:
            hi = x[i]
    lo -= 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        acc = 0.0
        for i in range(n):
            v = x[i] - mid
            if v > 1.0:
                acc += 1.0
            elif v > 0.0:
                acc += v
        if acc > total:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
