"""Two-level radio scheduling.

The coordinator level (:func:`compute_masks`) carves the shared grid into
disjoint per-slice resource masks each window. The slice level
(:func:`schedule_within_mask`) hands the cells of one mask to that slice's
flows. :func:`apply_option` maps a blueprint's RAN sharing option to the
pipeline that connects the two; Option 2 slices additionally pass through
the common-MAC split in :func:`common_mac_split`.

Tie-breaks are fixed everywhere: lower slice id, then lower UE id, then
lower ``(slot, rb)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import kernels
from .grid import ResourceGrid, ResourceMask, Tiling, mask_from_flat


class SchedulingError(ValueError):
    pass


class ReservationError(SchedulingError):
    pass


class FloorError(SchedulingError):
    pass


# --- policies --------------------------------------------------------------

@dataclass(frozen=True)
class StaticSplit:
    shares: Mapping[str, float]


@dataclass(frozen=True)
class WeightedFair:
    # None: use each slice's SLA priority weight
    weights: Optional[Mapping[str, float]] = None


@dataclass(frozen=True)
class MaxSpectralEfficiency:
    pass


@dataclass(frozen=True)
class FairnessWithFloor:
    floors: Mapping[str, int]
    weights: Optional[Mapping[str, float]] = None


Objective = Union[StaticSplit, WeightedFair, MaxSpectralEfficiency, FairnessWithFloor]


@dataclass(frozen=True)
class Reservation:
    slice_id: str
    cells: frozenset
    period_windows: int = 1

    def active(self, window_index: int) -> bool:
        return window_index % self.period_windows == 0


@dataclass(frozen=True)
class SdmxPolicy:
    objective: Objective = WeightedFair()
    reservations: tuple = ()
    # slice id -> cells that slice may never receive (interference hook)
    blacklist: Mapping[str, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        obj = self.objective
        weights = getattr(obj, "weights", None) or getattr(obj, "shares", None) or {}
        if any(w <= 0 for w in weights.values()):
            raise SchedulingError("shares and weights must be positive")
        if isinstance(obj, FairnessWithFloor) and any(f < 0 for f in obj.floors.values()):
            raise SchedulingError("floors must be non-negative")


def reserve_semi_persistent(policy: SdmxPolicy, slice_id: str, cells, period: int = 1) -> SdmxPolicy:
    """Record a periodic reservation of ``cells`` for ``slice_id``."""
    if period < 1:
        raise ReservationError("reservation period must be >= 1 window")
    cells = frozenset(tuple(c) for c in cells)
    for other in policy.reservations:
        clash = other.cells & cells
        if clash:
            raise ReservationError(
                f"cells {sorted(clash)[:3]} already reserved for {other.slice_id}"
            )
    res = Reservation(slice_id, cells, int(period))
    return replace(policy, reservations=policy.reservations + (res,))


@dataclass(frozen=True)
class SlicePolicy:
    discipline: str = "rr"  # rr | pf | edf
    horizon: float = 20.0
    pf_initial_average: float = 1.0

    def __post_init__(self):
        if self.discipline not in ("rr", "pf", "edf"):
            raise SchedulingError(f"unknown discipline {self.discipline!r}")
        if self.discipline == "pf" and self.horizon <= 0:
            raise SchedulingError("PF horizon must be > 0")


# --- coordinator level -----------------------------------------------------

@dataclass(frozen=True)
class SliceDemand:
    """What the coordinator knows about one slice at the start of a window."""

    slice_id: str
    backlog_bits: float
    weight: float = 1.0
    numerology: int = 0


def largest_remainder(total: int, weights: Mapping[str, float]) -> dict[str, int]:
    """Apportion ``total`` integer units by weight (Hamilton's method).

    Exact rational arithmetic; remainder ties go to the lower key.
    """
    keys = sorted(weights)
    if not keys or total <= 0:
        return {k: 0 for k in keys}
    w = {k: Fraction(weights[k]) for k in keys}
    wsum = sum(w.values())
    quotas = {k: total * w[k] / wsum for k in keys}
    counts = {k: math.floor(quotas[k]) for k in keys}
    left = total - sum(counts.values())
    order = sorted(keys, key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[:left]:
        counts[k] += 1
    return counts


def _top_cells(score: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    """The ``k`` candidate flat cells with highest score, ties to the lower index."""
    idx = np.flatnonzero(candidates)
    if k <= 0 or idx.size == 0:
        return idx[:0]
    order = np.lexsort((idx, -score[idx]))
    return idx[order[:k]]


def _eligibility(grid: ResourceGrid, ids, demands, tiling, blacklist) -> np.ndarray:
    elig = np.ones((len(ids), grid.n_cells), dtype=bool)
    for i, sid in enumerate(ids):
        if tiling is not None:
            elig[i] &= tiling.numerology_cells(demands[sid].numerology)
        for cell in blacklist.get(sid, ()):
            elig[i, grid.flat(cell)] = False
    return elig


def compute_masks(grid: ResourceGrid, demands: Sequence[SliceDemand], best_se: Mapping[str, np.ndarray],
                  policy: SdmxPolicy, window_index: int, tiling: Optional[Tiling] = None) -> dict[str, ResourceMask]:
    """Per-slice resource masks for one window.

    ``best_se[slice]`` holds, per flat grid cell, the spectral efficiency of
    the slice's best UE. Reserved cells go to their owners on their period
    windows; the rest follow the policy objective. Only slices with positive
    backlog compete under the demand-driven objectives.
    """
    by_id = {d.slice_id: d for d in demands}
    if len(by_id) != len(demands):
        raise SchedulingError("duplicate slice id in demands")
    ids = sorted(by_id)
    pos = {sid: i for i, sid in enumerate(ids)}
    n = grid.n_cells
    elig = _eligibility(grid, ids, by_id, tiling, policy.blacklist)
    score = np.zeros((len(ids), n))
    for sid in ids:
        if sid in best_se:
            score[pos[sid]] = np.asarray(best_se[sid], dtype=float).reshape(n)
    owner = np.full(n, -1, dtype=np.int64)

    for res in sorted(policy.reservations, key=lambda r: r.slice_id):
        if res.slice_id not in pos:
            raise ReservationError(f"reservation for unknown slice {res.slice_id}")
        if not res.active(window_index):
            continue
        for cell in sorted(res.cells):
            if not grid.contains(cell):
                raise ReservationError(f"reserved cell {cell} outside the grid")
            f = grid.flat(cell)
            if owner[f] >= 0:
                raise ReservationError(f"reserved cell {cell} claimed twice")
            if not elig[pos[res.slice_id], f]:
                raise ReservationError(f"reserved cell {cell} not usable by {res.slice_id}")
            owner[f] = pos[res.slice_id]

    active = [sid for sid in ids if by_id[sid].backlog_bits > 0]
    obj = policy.objective

    def weights_of(sids, explicit):
        return {s: (explicit[s] if explicit and s in explicit else by_id[s].weight) for s in sids}

    def pick(sid, k):
        i = pos[sid]
        cells = _top_cells(score[i], (owner < 0) & elig[i], k)
        owner[cells] = i

    def weighted_fill(sids, explicit):
        if not sids:
            return
        counts = largest_remainder(int((owner < 0).sum()), weights_of(sids, explicit))
        for sid in sids:
            pick(sid, counts[sid])
        # work conservation: leftovers the apportioned slices could not use
        rows = [pos[s] for s in sids]
        free = owner < 0
        if free.any():
            sub = kernels.argmax_owner(score[rows], elig[rows] & free[None, :])
            hit = sub >= 0
            owner[hit] = np.asarray(rows)[sub[hit]]

    if isinstance(obj, StaticSplit):
        shares = {s: obj.shares[s] for s in ids if s in obj.shares}
        counts = largest_remainder(int((owner < 0).sum()), shares)
        for sid in sorted(counts):
            cand = np.flatnonzero((owner < 0) & elig[pos[sid]])[:counts[sid]]
            owner[cand] = pos[sid]
    elif isinstance(obj, WeightedFair):
        weighted_fill(active, obj.weights)
    elif isinstance(obj, MaxSpectralEfficiency):
        if active:
            rows = [pos[s] for s in active]
            sub = kernels.argmax_owner(score[rows], elig[rows] & (owner < 0)[None, :])
            hit = sub >= 0
            owner[hit] = np.asarray(rows)[sub[hit]]
    elif isinstance(obj, FairnessWithFloor):
        floors = {s: int(obj.floors.get(s, 0)) for s in ids}
        if sum(floors.values()) > n:
            raise FloorError(f"floors sum to {sum(floors.values())} cells, grid has {n}")
        for sid in active:
            have = int((owner == pos[sid]).sum())
            pick(sid, floors[sid] - have)
            got = int((owner == pos[sid]).sum())
            if got < floors[sid]:
                raise FloorError(f"slice {sid}: only {got} usable cells for floor {floors[sid]}")
        weighted_fill(active, obj.weights)
    else:
        raise SchedulingError(f"unknown objective {obj!r}")

    return {
        sid: mask_from_flat(sid, grid, np.flatnonzero(owner == pos[sid]), window_index)
        for sid in ids
    }


# --- slice level ----------------------------------------------------------------

@dataclass(frozen=True)
class Grant:
    slice_id: str
    ue_id: str
    flow_id: str
    node: str
    cell: tuple
    bits: float


@dataclass
class Allocation:
    window_index: int
    grants: list = field(default_factory=list)

    def extend(self, grants):
        self.grants.extend(grants)

    def served_by_flow(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for g in self.grants:
            out[g.flow_id] = out.get(g.flow_id, 0.0) + g.bits
        return out

    def served_by_slice(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for g in self.grants:
            out[g.slice_id] = out.get(g.slice_id, 0.0) + g.bits
        return out


@dataclass
class SliceSchedulerState:
    """Per-slice memory carried across windows (PF averages, RR position)."""

    avg: dict = field(default_factory=dict)
    rr_last: Optional[str] = None


def _domain(mask: ResourceMask, nodes: Sequence[str]) -> list[tuple]:
    # time-major so per-flow bits are served in slot order
    return [(s, r, node) for (s, r) in sorted(mask.cells) for node in nodes]


def _claimants(flows):
    return sorted(flows, key=lambda f: (f.ue_id, f.id))


def _rate_matrix(claimants, domain, channel, serving, symbols_per_cell):
    rate = np.full((len(claimants), len(domain)), -1.0)
    for i, flow in enumerate(claimants):
        legs = serving.get(flow.ue_id, ())
        for j, (s, r, node) in enumerate(domain):
            if node in legs:
                rate[i, j] = channel.spectral_efficiency(flow.ue_id, node, r) * symbols_per_cell
    return rate


def _edf_assign(claimants, rate):
    """Earliest-deadline-first: each cell to the eligible flow whose head packet is due first."""
    queues = []
    for flow in claimants:
        if flow.full_buffer:
            queues.append([[flow.backlog_bits, math.inf]])
        else:
            queues.append([[p.remaining, p.deadline_ms] for p in flow.queue])
    owner = np.full(rate.shape[1], -1, dtype=np.int64)
    bits = np.zeros(rate.shape[1])
    for c in range(rate.shape[1]):
        best, best_deadline = -1, math.inf
        for i, q in enumerate(queues):
            if q and rate[i, c] > 0 and (best < 0 or q[0][1] < best_deadline):
                best, best_deadline = i, q[0][1]
        if best < 0:
            continue
        cap = rate[best, c]
        q = queues[best]
        used = 0.0
        while q and cap > 0:
            take = min(cap, q[0][0])
            q[0][0] -= take
            cap -= take
            used += take
            if q[0][0] <= 0:
                q.pop(0)
        owner[c] = best
        bits[c] = used
    return owner, bits


def schedule_within_mask(slice_id: str, mask: ResourceMask, flows, channel, policy: SlicePolicy, *,
                         serving: Mapping[str, Sequence[str]], symbols_per_cell: int,
                         nodes: Optional[Sequence[str]] = None, state: Optional[SliceSchedulerState] = None,
                         window_index: int = 0, update_state: bool = True) -> list[Grant]:
    """Hand the cells of ``mask`` to the slice's backlogged flows.

    ``serving`` maps UE id to the nodes it can be served from; the mask is
    replicated on every node in ``nodes`` (default: all serving nodes). A
    cell carries ``se * symbols_per_cell`` bits for its owner, capped by the
    owner's remaining backlog. ``state`` is updated in place (PF average,
    RR position); with ``update_state=False`` the PF average is left for the
    caller, which matters when one slice is scheduled over several domains.
    """
    if mask.slice_id != slice_id:
        raise SchedulingError(f"mask of {mask.slice_id} passed to slice {slice_id}")
    state = state if state is not None else SliceSchedulerState()
    claimants = _claimants(flows)
    if nodes is None:
        nodes = sorted({n for f in claimants for n in serving.get(f.ue_id, ())})
    domain = _domain(mask, nodes)
    if not claimants:
        if policy.discipline == "pf" and update_state:
            update_pf_average(state, policy, flows, [])
        return []
    rate = _rate_matrix(claimants, domain, channel, serving, symbols_per_cell)
    backlog = np.array([f.backlog_bits for f in claimants], dtype=float)

    if policy.discipline == "pf":
        avg = np.array([state.avg.get(f.ue_id, policy.pf_initial_average) for f in claimants])
        owner, bits = kernels.pf_assign(rate, avg, backlog) if domain else (np.zeros(0, int), np.zeros(0))
    elif policy.discipline == "rr":
        ids = [f.ue_id for f in claimants]
        start = 0 if state.rr_last is None else bisect.bisect_right(ids, state.rr_last) % len(ids)
        owner, bits, _ = kernels.rr_assign(rate, backlog, start)
        served_rows = owner[owner >= 0]
        if served_rows.size:
            state.rr_last = claimants[int(served_rows[-1])].ue_id
    else:
        owner, bits = _edf_assign(claimants, rate)

    grants = [
        Grant(slice_id, claimants[o].ue_id, claimants[o].id, domain[j][2], (domain[j][0], domain[j][1]), float(bits[j]))
        for j, o in enumerate(owner) if o >= 0
    ]
    if policy.discipline == "pf" and update_state:
        # idle flows decay towards zero too
        update_pf_average(state, policy, flows, grants)
    return grants


def update_pf_average(state: SliceSchedulerState, policy: SlicePolicy, flows, grants) -> None:
    served: dict[str, float] = {}
    for g in grants:
        served[g.ue_id] = served.get(g.ue_id, 0.0) + g.bits
    beta = 1.0 / policy.horizon
    for ue_id in sorted({f.ue_id for f in flows}):
        prev = state.avg.get(ue_id, policy.pf_initial_average)
        state.avg[ue_id] = (1.0 - beta) * prev + beta * served.get(ue_id, 0.0)


# --- RAN sharing options ------------------------------------------------------

@dataclass(frozen=True)
class Pipeline:
    option: int
    tenant_scheduler: bool  # tenant runs its own intra-mask scheduler
    prescheduling: bool  # tenant only orders flows, common MAC decides cells
    numerology_enforced: bool = True


def apply_option(option: int) -> Pipeline:
    """Scheduling pipeline for a RAN sharing option.

    1: only the lower PHY is shared; the tenant schedules inside its mask.
    2: the MAC is shared; the tenant pre-schedules, the common MAC decides.
    3: the whole RAN is shared; the coordinator runs the slice's configured
       policy itself, which yields the same grants as option 1 would.
    """
    if option == 1:
        return Pipeline(1, tenant_scheduler=True, prescheduling=False)
    if option == 2:
        return Pipeline(2, tenant_scheduler=False, prescheduling=True)
    if option == 3:
        return Pipeline(3, tenant_scheduler=False, prescheduling=False)
    raise SchedulingError(f"unknown RAN option {option}")


@dataclass(frozen=True)
class PreScheduleEntry:
    flow_id: str
    ue_id: str
    cells: int


@dataclass(frozen=True)
class PreSchedule:
    slice_id: str
    entries: tuple  # priority order, highest first

    @property
    def requested(self) -> int:
        return sum(e.cells for e in self.entries)


@dataclass(frozen=True)
class DemotionEvent:
    window_index: int
    slice_id: str
    flow_id: str
    requested: int
    granted: int


def build_preschedule(slice_id: str, flows, policy: SlicePolicy, mean_rate: Mapping[str, float],
                      state: Optional[SliceSchedulerState] = None, max_cells: Optional[int] = None) -> PreSchedule:
    """Tenant-side priority list: flows ordered by the slice's discipline.

    Each entry asks for enough cells to clear its backlog at the flow's mean
    per-cell rate ``mean_rate[flow_id]``.
    """
    state = state or SliceSchedulerState()
    live = [f for f in _claimants(flows) if f.backlog_bits > 0 and mean_rate.get(f.id, 0.0) > 0]
    if policy.discipline == "edf":
        live.sort(key=lambda f: ((f.head.deadline_ms if f.head else math.inf), f.ue_id, f.id))
    elif policy.discipline == "pf":
        live.sort(key=lambda f: (-mean_rate[f.id] / state.avg.get(f.ue_id, policy.pf_initial_average), f.ue_id, f.id))
    elif state.rr_last is not None:
        k = bisect.bisect_right([f.ue_id for f in live], state.rr_last)
        live = live[k:] + live[:k]
    entries = []
    for f in live:
        need = math.ceil(f.backlog_bits / mean_rate[f.id])
        if max_cells is not None:
            need = min(need, max_cells)
        entries.append(PreScheduleEntry(f.id, f.ue_id, int(need)))
    return PreSchedule(slice_id, tuple(entries))


def fair_grants(pool: int, requests: Mapping[str, int], weights: Mapping[str, float]) -> dict[str, int]:
    """Integer cell grants for pre-scheduling slices sharing ``pool`` cells.

    Slices asking for no more than their weighted share get everything they
    asked for; the rest of the pool is water-filled across the over-share
    slices in proportion to weight, capped at each request.
    """
    asking = {s: r for s, r in requests.items() if r > 0}
    grants = {s: 0 for s in requests}
    if sum(asking.values()) <= pool:
        grants.update(asking)
        return grants
    share = largest_remainder(pool, {s: weights[s] for s in asking})
    over = sorted(s for s in asking if asking[s] > share[s])
    for s in asking:
        if s not in over:
            grants[s] = asking[s]
    left = pool - sum(grants.values())
    w = {s: Fraction(weights[s]) for s in over}
    while left > 0:
        open_ = [s for s in over if grants[s] < asking[s]]
        if not open_:
            break
        s = min(open_, key=lambda k: (Fraction(grants[k]) / w[k], k))
        grants[s] += 1
        left -= 1
    return grants


def common_mac_split(grid: ResourceGrid, pool: ResourceMask, preschedules: Mapping[str, PreSchedule],
                     weights: Mapping[str, float], best_se: Mapping[str, np.ndarray], window_index: int = 0):
    """Split the pooled cells of pre-scheduling slices into final masks.

    Returns ``(masks, demotions)``. A flow is demoted (granted fewer cells
    than it asked for) only inside a slice that asked for more than its
    weighted share of the pool.
    """
    pool_flat = np.array(sorted(grid.flat(c) for c in pool.cells), dtype=np.int64)
    requests = {s: min(p.requested, pool_flat.size) for s, p in preschedules.items()}
    grants = fair_grants(pool_flat.size, requests, weights)
    free = np.zeros(grid.n_cells, dtype=bool)
    free[pool_flat] = True
    masks, demotions = {}, []
    for sid in sorted(preschedules):
        score = np.asarray(best_se.get(sid, np.zeros(grid.n_cells)), dtype=float).reshape(-1)
        cells = _top_cells(score, free, grants[sid])
        free[cells] = False
        masks[sid] = mask_from_flat(sid, grid, cells, window_index)
        budget = grants[sid]
        for e in preschedules[sid].entries:
            got = min(e.cells, budget)
            budget -= got
            if got < e.cells:
                demotions.append(DemotionEvent(window_index, sid, e.flow_id, e.cells, got))
    return masks, demotions


def schedule_prescheduled(slice_id: str, mask: ResourceMask, flows, channel, preschedule: Optional[PreSchedule], *,
                          serving: Mapping[str, Sequence[str]], symbols_per_cell: int,
                          nodes: Optional[Sequence[str]] = None) -> list[Grant]:
    """Common-MAC per-cell decisions honouring a tenant's priority order.

    Flows are served in pre-schedule order; each takes its best-rate cells
    until it has the cells it asked for, and any cells left over go down the
    list again to flows that still hold backlog.
    """
    if preschedule is None:
        raise SchedulingError(f"option 2 slice {slice_id} sent no pre-schedule")
    if mask.slice_id != slice_id:
        raise SchedulingError(f"mask of {mask.slice_id} passed to slice {slice_id}")
    by_id = {f.id: f for f in flows}
    order = [by_id[e.flow_id] for e in preschedule.entries if e.flow_id in by_id]
    if nodes is None:
        nodes = sorted({n for f in order for n in serving.get(f.ue_id, ())})
    domain = _domain(mask, nodes)
    if not order or not domain:
        return []
    rate = _rate_matrix(order, domain, channel, serving, symbols_per_cell)
    free = np.ones(len(domain), dtype=bool)
    picked = np.full(len(domain), -1, dtype=np.int64)
    want = [e.cells for e in preschedule.entries if e.flow_id in by_id]
    for i in range(len(order)):
        cells = _top_cells(rate[i], free & (rate[i] > 0), want[i])
        picked[cells] = i
        free[cells] = False
    for i, f in enumerate(order):
        need = f.backlog_bits - rate[i][picked == i].sum()
        if need <= 0:
            continue
        for c in _top_cells(rate[i], free & (rate[i] > 0), len(domain)):
            if need <= 0:
                break
            picked[c] = i
            free[c] = False
            need -= rate[i, c]
    grants = []
    remaining = [f.backlog_bits for f in order]
    for j in range(len(domain)):
        i = picked[j]
        if i < 0 or remaining[i] <= 0:
            continue
        b = min(rate[i, j], remaining[i])
        remaining[i] -= b
        f = order[i]
        grants.append(Grant(slice_id, f.ue_id, f.id, domain[j][2], (domain[j][0], domain[j][1]), float(b)))
    return grants


def check_isolation(grid: ResourceGrid, masks: Mapping[str, ResourceMask], grants: Sequence[Grant]) -> None:
    """Raise ``AssertionError`` naming the broken isolation property."""
    seen: dict = {}
    for sid, m in masks.items():
        for cell in m.cells:
            assert grid.contains(cell), f"isolation: mask of {sid} leaves the grid at {cell}"
            assert cell not in seen, f"isolation: cell {cell} in masks of {seen.get(cell)} and {sid}"
            seen[cell] = sid
    used = set()
    for g in grants:
        assert g.cell in masks[g.slice_id].cells, f"isolation: {g.slice_id} used {g.cell} outside its mask"
        key = (g.node, g.cell)
        assert key not in used, f"isolation: cell {g.cell} at {g.node} granted twice"
        used.add(key)
