"""Reference implementations written independently of the package code.

They favour obviousness over speed: plain loops, exhaustive enumeration.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

NEG = -1e9


def maxse_bruteforce(se, eligible):
    """Exhaustive MaxSE assignment.

    ``se[s, c]`` is slice s's best spectral efficiency on cell c. Every
    assignment of cells to slices is enumerated; the winner maximises total
    se, ties going to the lexicographically smallest assignment vector
    (cell 0 most significant), which is lowest-slice-per-cell. Cells no
    slice may use come back as -1.
    """
    se = np.asarray(se, dtype=float)
    n_s, n_c = se.shape
    if n_s == 0:
        return np.full(n_c, -1)
    val = np.where(eligible, se, NEG)
    total = val[:, 0]
    for c in range(1, n_c):
        total = np.add.outer(total, val[:, c])
    flat = int(np.argmax(total))
    assign = np.array(np.unravel_index(flat, (n_s,) * n_c) if n_c > 1 else (flat,))
    out = assign.astype(int).reshape(-1)
    for c in range(n_c):
        if not eligible[out[c], c]:
            out[c] = -1
    return out


def pf_reference(rates, backlogs, horizon, windows, initial_avg=1.0):
    """Proportional-fair reference over several windows.

    ``rates[w][u][c]`` bits cell c carries for UE u in window w (cells in
    (slot, rb) order); ``backlogs[w][u]`` the UE's backlog at window start.
    Within a window the averages are frozen; each cell goes to the largest
    rate/average among UEs with backlog left and a positive rate, ties to the
    lower UE index. Averages then move by 1/horizon towards the bits served.
    Returns per-window lists of (owner, bits) per cell.
    """
    n_ue = len(rates[0])
    avg = [initial_avg] * n_ue
    beta = 1.0 / horizon
    out = []
    for w in range(windows):
        left = list(backlogs[w])
        served = [0.0] * n_ue
        alloc = []
        for c in range(len(rates[w][0])):
            best, best_m = None, None
            for u in range(n_ue):
                r = rates[w][u][c]
                if left[u] <= 0 or r <= 0:
                    continue
                m = r / avg[u]
                if best is None or m > best_m:
                    best, best_m = u, m
            if best is None:
                alloc.append((-1, 0.0))
                continue
            b = min(rates[w][best][c], left[best])
            left[best] -= b
            served[best] += b
            alloc.append((best, b))
        out.append(alloc)
        avg = [(1.0 - beta) * avg[u] + beta * served[u] for u in range(n_ue)]
    return out


def weighted_maxmin(pool, requests, weights):
    """Exhaustive weighted max-min fair integer split of ``pool`` cells.

    Among all grant vectors with ``0 <= g_s <= r_s`` summing to
    ``min(pool, sum r)``, return one whose sorted vector of normalised grants
    ``g_s / w_s`` (over requesting slices) is lexicographically largest.
    """
    keys = sorted(k for k in requests if requests[k] > 0)
    target = min(pool, sum(requests[k] for k in keys))
    best, best_key = None, None
    for g in itertools.product(*(range(requests[k] + 1) for k in keys)):
        if sum(g) != target:
            continue
        key = sorted(Fraction(x) / Fraction(weights[k]) for x, k in zip(g, keys))
        if best_key is None or key > best_key:
            best, best_key = dict(zip(keys, g)), key
    out = {k: 0 for k in requests}
    out.update(best or {})
    return out


def offline_enumerate(trace, grid_cells):
    """Best total price over all capacity-feasible subsets, no pruning."""
    reqs = list(trace)
    horizon = max((r.arrival_window + r.duration_windows for r in reqs), default=0)
    best = 0.0
    for mask in range(1 << len(reqs)):
        load = [0] * horizon
        value = 0.0
        ok = True
        for i, r in enumerate(reqs):
            if mask >> i & 1:
                value += r.price_per_window * r.duration_windows
                for t in range(r.arrival_window, r.arrival_window + r.duration_windows):
                    load[t] += r.demand_cells_per_window
                    if load[t] > grid_cells:
                        ok = False
        if ok and value > best:
            best = value
    return best


def replay_reference(trace, thresholds, grid_cells, kind="threshold"):
    """Independent fluid replay of a threshold/greedy/always-accept policy.

    Returns (revenue, penalties). Requests are offered in (arrival, id)
    order after expiries; all active slices pay one penalty in any window
    whose committed cells exceed the grid.
    """
    horizon = max((r.arrival_window + r.duration_windows for r in trace), default=0)
    active = []
    revenue = penalties = Fraction(0)
    for w in range(horizon):
        active = [r for r in active if r.arrival_window + r.duration_windows > w]
        for r in sorted((r for r in trace if r.arrival_window == w), key=lambda r: r.id):
            load = Fraction(sum(a.demand_cells_per_window for a in active), grid_cells)
            fits = load + Fraction(r.demand_cells_per_window, grid_cells) <= 1
            if kind == "always_accept":
                ok = True
            elif kind == "greedy":
                ok = fits
            else:
                ok = fits and load <= Fraction(thresholds[r.class_id])
            if ok:
                active.append(r)
        over = sum(a.demand_cells_per_window for a in active) > grid_cells
        for a in active:
            revenue += Fraction(a.price_per_window)
            if over:
                penalties += Fraction(a.penalty_per_violation)
    return float(revenue), float(penalties)
