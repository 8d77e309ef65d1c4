"""Pure-Python versions of the compiled allocation loops.

Same contracts and arithmetic as ``_core.pyx``; used when the extension is
not built or ``NETSLICE_PURE_PYTHON`` is set.
"""

import numpy as np


def pf_assign(rate, avg, backlog):
    n_ue, n_cell = rate.shape
    owner = np.full(n_cell, -1, dtype=np.int64)
    bits = np.zeros(n_cell, dtype=np.float64)
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
            b = min(rate[best, c], backlog[best])
            backlog[best] -= b
            owner[c] = best
            bits[c] = b
    return owner, bits


def rr_assign(rate, backlog, start):
    n_ue, n_cell = rate.shape
    owner = np.full(n_cell, -1, dtype=np.int64)
    bits = np.zeros(n_cell, dtype=np.float64)
    if n_ue == 0:
        return owner, bits, 0
    ptr = start % n_ue
    for c in range(n_cell):
        for k in range(n_ue):
            u = (ptr + k) % n_ue
            r = rate[u, c]
            if backlog[u] > 0.0 and r > 0.0:
                b = min(r, backlog[u])
                backlog[u] -= b
                owner[c] = u
                bits[c] = b
                ptr = (u + 1) % n_ue
                break
    return owner, bits, ptr


def argmax_owner(score, eligible):
    n_row, n_cell = score.shape
    owner = np.full(n_cell, -1, dtype=np.int64)
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
    return owner
