# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-cell allocation loops.

Each function mirrors one in ``_fallback.py`` operation for operation, so
both produce bit-identical results.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def pf_assign(const double[:, ::1] rate, const double[::1] avg, double[::1] backlog):
    """Give each cell to the backlogged UE maximising rate/avg; ties to the lower row."""
    cdef Py_ssize_t n_ue = rate.shape[0], n_cell = rate.shape[1]
    cdef Py_ssize_t c, u, best
    cdef double metric, best_metric, r, b
    owner_arr = np.full(n_cell, -1, dtype=np.int64)
    bits_arr = np.zeros(n_cell, dtype=np.float64)
    cdef long long[::1] owner = owner_arr
    cdef double[::1] bits = bits_arr
    for c in range(n_cell):
        best = -1
        best_metric = 0.0
        for u in range(n_ue):
            r = rate[u, c]
            if backlog[u] <= 0.0 or r <= 0.0:
                continue
            metric = r / avg[u]
            if best < 0 or metric > best_metric:
                best = u
                best_metric = metric
        if best >= 0:
            r = rate[best, c]
            b = backlog[best]
            if r < b:
                b = r
            backlog[best] -= b
            owner[c] = best
            bits[c] = b
    return owner_arr, bits_arr


def rr_assign(const double[:, ::1] rate, double[::1] backlog, Py_ssize_t start):
    """Deal cells cyclically over backlogged rows starting at row ``start``."""
    cdef Py_ssize_t n_ue = rate.shape[0], n_cell = rate.shape[1]
    cdef Py_ssize_t c, k, u, ptr = start
    cdef double r, b
    owner_arr = np.full(n_cell, -1, dtype=np.int64)
    bits_arr = np.zeros(n_cell, dtype=np.float64)
    cdef long long[::1] owner = owner_arr
    cdef double[::1] bits = bits_arr
    if n_ue == 0:
        return owner_arr, bits_arr, 0
    ptr = ptr % n_ue
    for c in range(n_cell):
        for k in range(n_ue):
            u = (ptr + k) % n_ue
            r = rate[u, c]
            if backlog[u] > 0.0 and r > 0.0:
                b = backlog[u]
                if r < b:
                    b = r
                backlog[u] -= b
                owner[c] = u
                bits[c] = b
                ptr = (u + 1) % n_ue
                break
    return owner_arr, bits_arr, ptr


def argmax_owner(const double[:, ::1] score, const unsigned char[:, ::1] eligible):
    """Per column, the eligible row with the highest score; ties to the lower row."""
    cdef Py_ssize_t n_row = score.shape[0], n_cell = score.shape[1]
    cdef Py_ssize_t c, s, best
    cdef double v, best_v
    owner_arr = np.full(n_cell, -1, dtype=np.int64)
    cdef long long[::1] owner = owner_arr
    for c in range(n_cell):
        best = -1
        best_v = 0.0
        for s in range(n_row):
            if not eligible[s, c]:
                continue
            v = score[s, c]
            if best < 0 or v > best_v:
                best = s
                best_v = v
        owner[c] = best
    return owner_arr
