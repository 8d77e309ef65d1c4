"""Slice admission control and revenue accounting.

Requests ask for a number of grid cells per window for a number of
windows. Admission policies decide on arrival; :func:`replay` evaluates a
policy on a recorded trace with a fluid capacity model, which is what the
threshold sweep and the offline bound are compared on.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class BrokerError(ValueError):
    pass


@dataclass(frozen=True)
class SliceRequest:
    id: str
    tenant_id: str
    blueprint_id: str
    demand_cells_per_window: int
    duration_windows: int
    price_per_window: float
    penalty_per_violation: float
    arrival_window: int
    class_id: int = 0

    def __post_init__(self):
        if self.demand_cells_per_window < 1:
            raise BrokerError(f"request {self.id}: demand must be >= 1 cell")
        if self.duration_windows < 1:
            raise BrokerError(f"request {self.id}: duration must be >= 1 window")
        if self.price_per_window < 0 or self.penalty_per_violation < 0:
            raise BrokerError(f"request {self.id}: price and penalty must be >= 0")
        if self.arrival_window < 0:
            raise BrokerError(f"request {self.id}: negative arrival window")

    @property
    def end_window(self) -> int:
        return self.arrival_window + self.duration_windows

    @property
    def total_price(self) -> float:
        return self.price_per_window * self.duration_windows


TRACE_FIELDS = tuple(f.name for f in fields(SliceRequest))


def dumps_request(req: SliceRequest) -> str:
    return json.dumps({k: getattr(req, k) for k in TRACE_FIELDS})


def write_trace(path, requests: Iterable[SliceRequest]) -> None:
    """One JSON object per line, keys in :data:`TRACE_FIELDS` order."""
    with open(path, "w") as fh:
        for req in requests:
            fh.write(dumps_request(req) + "\n")


def read_trace(path) -> list[SliceRequest]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(SliceRequest(**{k: rec[k] for k in TRACE_FIELDS}))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise BrokerError(f"{path}:{lineno}: bad request record ({exc})") from None
    return out


@dataclass(frozen=True)
class RequestClass:
    id: int
    blueprint_id: str
    tenant_id: str
    rate_per_window: float
    demand_cells: tuple
    duration_windows: tuple
    price_per_cell_window: float
    penalty_per_violation: float


def generate_trace(classes: Sequence[RequestClass], horizon_windows: int, rng, grid_cells: Optional[int] = None) -> list[SliceRequest]:
    """Poisson request arrivals per window and class, uniform integer demand and duration."""
    out = []
    for w in range(horizon_windows):
        for cls in sorted(classes, key=lambda c: c.id):
            n = int(rng.poisson(cls.rate_per_window))
            for _ in range(n):
                demand = int(rng.integers(cls.demand_cells[0], cls.demand_cells[1] + 1))
                if grid_cells is not None:
                    demand = min(demand, grid_cells)
                dur = int(rng.integers(cls.duration_windows[0], cls.duration_windows[1] + 1))
                out.append(SliceRequest(
                    id=f"r{len(out):05d}", tenant_id=cls.tenant_id, blueprint_id=cls.blueprint_id,
                    demand_cells_per_window=demand, duration_windows=dur,
                    price_per_window=float(cls.price_per_cell_window * demand),
                    penalty_per_violation=float(cls.penalty_per_violation),
                    arrival_window=w, class_id=cls.id,
                ))
    return out


# --- admission -------------------------------------------------------------

@dataclass(frozen=True)
class AdmissionPolicy:
    kind: str = "greedy"  # always_accept | greedy | threshold
    thresholds: tuple = ()

    def __post_init__(self):
        if self.kind not in ("always_accept", "greedy", "threshold"):
            raise BrokerError(f"unknown admission policy {self.kind!r}")
        if any(not 0 <= t <= 1 for t in self.thresholds):
            raise BrokerError("thresholds must lie in [0, 1]")
        if self.kind == "threshold" and not self.thresholds:
            raise BrokerError("threshold policy needs per-class thresholds")

    @property
    def caps_load(self) -> bool:
        return self.kind != "always_accept"

    def label(self) -> str:
        if self.kind == "threshold":
            return "threshold(" + ",".join(repr(t) for t in self.thresholds) + ")"
        return self.kind


@dataclass(frozen=True)
class AdmissionDecision:
    accept: bool
    reason: str = ""


def decide(req: SliceRequest, committed_load, policy: AdmissionPolicy, grid_cells: int) -> AdmissionDecision:
    """Accept or reject ``req`` given the committed load fraction at arrival."""
    if committed_load < 0:
        raise BrokerError("committed load must be >= 0")
    load = Fraction(committed_load)
    if policy.kind == "always_accept":
        return AdmissionDecision(True)
    if policy.kind == "threshold":
        if not 0 <= req.class_id < len(policy.thresholds):
            raise BrokerError(f"no threshold for request class {req.class_id}")
        theta = Fraction(policy.thresholds[req.class_id])
        if load > theta:
            return AdmissionDecision(False, f"load {float(load):.4g} above threshold {float(theta):.4g}")
    if load + Fraction(req.demand_cells_per_window, grid_cells) > 1:
        return AdmissionDecision(False, "insufficient capacity")
    return AdmissionDecision(True)


@dataclass
class RevenueLedger:
    revenue: dict = field(default_factory=dict)
    penalties: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)
    rejected: dict = field(default_factory=dict)
    utilization: list = field(default_factory=list)

    @property
    def total_revenue(self) -> float:
        return float(sum(self.revenue[k] for k in sorted(self.revenue)))

    @property
    def total_penalties(self) -> float:
        return float(sum(self.penalties[k] for k in sorted(self.penalties)))

    @property
    def net(self) -> float:
        return self.total_revenue - self.total_penalties

    def record_decision(self, req: SliceRequest, decision: AdmissionDecision) -> None:
        book = self.accepted if decision.accept else self.rejected
        book[req.class_id] = book.get(req.class_id, 0) + 1

    def to_dict(self) -> dict:
        return {
            "revenue": dict(sorted(self.revenue.items())),
            "penalties": dict(sorted(self.penalties.items())),
            "accepted": {str(k): v for k, v in sorted(self.accepted.items())},
            "rejected": {str(k): v for k, v in sorted(self.rejected.items())},
            "total_revenue": self.total_revenue,
            "total_penalties": self.total_penalties,
            "net_revenue": self.net,
        }


def settle_window(ledger: RevenueLedger, active: Sequence[SliceRequest], violated: Iterable[str] = ()) -> RevenueLedger:
    """Accrue one window of prices, plus penalties for the violating request ids.

    Mutates and returns ``ledger``.
    """
    violated = set(violated)
    for req in sorted(active, key=lambda r: r.id):
        ledger.revenue[req.tenant_id] = ledger.revenue.get(req.tenant_id, 0.0) + req.price_per_window
        if req.id in violated:
            ledger.penalties[req.tenant_id] = ledger.penalties.get(req.tenant_id, 0.0) + req.penalty_per_violation
    return ledger


class Admission:
    """Running admission state: which requests are active at each window."""

    def __init__(self, policy: AdmissionPolicy, grid_cells: int):
        self.policy = policy
        self.grid_cells = grid_cells
        self.active: list[SliceRequest] = []
        self.ledger = RevenueLedger()

    @property
    def committed_cells(self) -> int:
        return sum(r.demand_cells_per_window for r in self.active)

    @property
    def load(self) -> Fraction:
        return Fraction(self.committed_cells, self.grid_cells)

    def expire(self, window: int) -> list[SliceRequest]:
        gone = [r for r in self.active if r.end_window <= window]
        self.active = [r for r in self.active if r.end_window > window]
        return gone

    def offer(self, req: SliceRequest) -> AdmissionDecision:
        d = decide(req, self.load, self.policy, self.grid_cells)
        self.ledger.record_decision(req, d)
        if d.accept:
            self.active.append(req)
        return d


def replay(trace: Sequence[SliceRequest], policy: AdmissionPolicy, grid_cells: int) -> RevenueLedger:
    """Evaluate ``policy`` on ``trace`` with a fluid capacity model.

    When the committed demand exceeds the grid, capacity is shared in
    proportion to demand, so every active slice falls short of its demand
    and is charged one violation for that window.
    """
    adm = Admission(policy, grid_cells)
    if not trace:
        return adm.ledger
    horizon = max(r.end_window for r in trace)
    by_window: dict[int, list] = {}
    for r in trace:
        by_window.setdefault(r.arrival_window, []).append(r)
    for w in range(horizon):
        adm.expire(w)
        for r in sorted(by_window.get(w, ()), key=lambda r: r.id):
            adm.offer(r)
        over = adm.committed_cells > grid_cells
        settle_window(adm.ledger, adm.active, [r.id for r in adm.active] if over else ())
        adm.ledger.utilization.append(float(adm.load))
        if policy.caps_load and adm.load > 1:
            raise AssertionError(f"load cap: committed load {float(adm.load)} at window {w}")
    return adm.ledger


@dataclass(frozen=True)
class SweepResult:
    thresholds: tuple
    revenue: float
    penalties: float

    @property
    def net(self) -> float:
        return self.revenue - self.penalties


def optimize_thresholds(trace: Sequence[SliceRequest], theta_grid: Sequence[Sequence[float]],
                        sim: Optional[Callable] = None, grid_cells: Optional[int] = None):
    """Exhaustively evaluate candidate threshold vectors on one trace.

    ``sim(trace, policy)`` returns a :class:`RevenueLedger`; by default the
    fluid :func:`replay` on ``grid_cells``. Returns ``(best, results)`` where
    ``best`` maximises net revenue, ties to the lexicographically smallest
    threshold vector.
    """
    candidates = sorted({tuple(float(t) for t in th) for th in theta_grid})
    if not candidates:
        raise BrokerError("empty threshold grid")
    if sim is None:
        if grid_cells is None:
            raise BrokerError("grid_cells required for the default evaluation")
        sim = lambda tr, pol: replay(tr, pol, grid_cells)  # noqa: E731
    results = []
    for th in candidates:
        ledger = sim(trace, AdmissionPolicy("threshold", th))
        results.append(SweepResult(th, ledger.total_revenue, ledger.total_penalties))
    best = results[0]
    for r in results[1:]:
        if r.net > best.net:
            best = r
    return best, results


def threshold_grid(values_per_class: Sequence[Sequence[float]]) -> list[tuple]:
    return [tuple(v) for v in itertools.product(*values_per_class)]


def _components(trace: Sequence[SliceRequest]) -> list[list[SliceRequest]]:
    """Group requests whose active intervals chain together."""
    reqs = sorted(trace, key=lambda r: (r.arrival_window, r.id))
    groups, end = [], -1
    for r in reqs:
        if groups and r.arrival_window < end:
            groups[-1].append(r)
            end = max(end, r.end_window)
        else:
            groups.append([r])
            end = r.end_window
    return groups


def offline_optimal(trace: Sequence[SliceRequest], grid_cells: int, max_requests: int = 26) -> float:
    """Best net revenue of any capacity-feasible accept set (exact).

    Depth-first search over accept/reject per request, cutting a branch as
    soon as a window would be over capacity or the remaining prices cannot
    beat the incumbent. Independent overlap groups are solved separately;
    ``max_requests`` caps the size of any one group.
    """
    total = 0.0
    for group in _components(trace):
        if len(group) > max_requests:
            raise BrokerError(f"{len(group)} overlapping requests exceed the cap of {max_requests}")
        total += _solve_group(group, grid_cells)
    return total


def _solve_group(group, grid_cells):
    group = sorted(group, key=lambda r: (-r.total_price, r.id))
    t0 = min(r.arrival_window for r in group)
    t1 = max(r.end_window for r in group)
    used = np.zeros(t1 - t0, dtype=np.int64)
    values = [r.total_price for r in group]
    suffix = np.concatenate([np.cumsum(values[::-1])[::-1], [0.0]])
    best = 0.0

    def dfs(i, value):
        nonlocal best
        if value > best:
            best = value
        if i == len(group) or value + suffix[i] <= best:
            return
        r = group[i]
        span = slice(r.arrival_window - t0, r.end_window - t0)
        if (used[span] + r.demand_cells_per_window <= grid_cells).all():
            used[span] += r.demand_cells_per_window
            dfs(i + 1, value + values[i])
            used[span] -= r.demand_cells_per_window
        dfs(i + 1, value)

    dfs(0, 0.0)
    return best
