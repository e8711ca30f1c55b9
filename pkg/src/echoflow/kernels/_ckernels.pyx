# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled counting kernels over packed flow batches.

A packed batch is three parallel per-packet arrays (sizes, times, dirs) plus an
``offsets`` array of length F+1 delimiting the packets of each flow.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def size_hist(const cnp.int64_t[::1] sizes, const cnp.uint8_t[::1] dirs,
              const cnp.int64_t[::1] offsets, const cnp.int32_t[::1] lookup,
              Py_ssize_t n_bins, cnp.int64_t[:, ::1] out):
    cdef Py_ssize_t n_flows = offsets.shape[0] - 1
    cdef Py_ssize_t cap = lookup.shape[0]
    cdef Py_ssize_t f, p, b
    cdef cnp.int64_t v
    with nogil:
        for f in range(n_flows):
            for p in range(offsets[f], offsets[f + 1]):
                v = sizes[p]
                if v >= cap:
                    b = n_bins - 1
                elif v < 0:
                    b = 0
                else:
                    b = lookup[v]
                out[f, dirs[p] * n_bins + b] += 1


cdef inline Py_ssize_t _bisect(const double[::1] bounds, double t) noexcept nogil:
    # index of the half-open interval [b_i, b_{i+1}) holding t, clipped to the bin range
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = bounds.shape[0]
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if bounds[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    lo -= 1
    if lo < 0:
        return 0
    if lo > bounds.shape[0] - 2:
        return bounds.shape[0] - 2
    return lo


def time_hist(const double[::1] times, const cnp.uint8_t[::1] dirs,
              const cnp.int64_t[::1] offsets, const double[::1] bounds,
              double tau, cnp.int64_t[:, ::1] out):
    cdef Py_ssize_t n_flows = offsets.shape[0] - 1
    cdef Py_ssize_t n_bins = bounds.shape[0] - 1
    cdef Py_ssize_t f, p
    cdef double t
    with nogil:
        for f in range(n_flows):
            for p in range(offsets[f], offsets[f + 1]):
                t = times[p]
                if t >= tau:
                    continue
                out[f, dirs[p] * n_bins + _bisect(bounds, t)] += 1


def value_hist(const cnp.int64_t[::1] values, const cnp.int32_t[::1] lookup,
               Py_ssize_t n_bins, cnp.int64_t[::1] out):
    cdef Py_ssize_t cap = lookup.shape[0]
    cdef Py_ssize_t i
    cdef cnp.int64_t v
    with nogil:
        for i in range(values.shape[0]):
            v = values[i]
            if v >= cap:
                out[n_bins - 1] += 1
            elif v < 0:
                out[0] += 1
            else:
                out[lookup[v]] += 1
