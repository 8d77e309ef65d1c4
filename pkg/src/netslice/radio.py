"""Radio substrate: nodes, UEs, traffic flows, mobility and channel quality."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Node:
    id: str
    position: tuple[float, float]
    site_id: str = ""
    edge_cloud: bool = False


@dataclass(frozen=True)
class Topology:
    """Radio nodes (kept sorted by id) plus transport links keyed by node pair."""

    nodes: tuple
    links: dict = field(default_factory=dict)

    def __post_init__(self):
        ordered = tuple(sorted(self.nodes, key=lambda n: n.id))
        ids = [n.id for n in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node id in topology")
        object.__setattr__(self, "nodes", ordered)
        object.__setattr__(self, "_index", {nid: i for i, nid in enumerate(ids)})
        object.__setattr__(self, "_xy", np.array([n.position for n in ordered], dtype=float).reshape(-1, 2))

    @property
    def node_ids(self) -> tuple:
        return tuple(n.id for n in self.nodes)

    @property
    def positions(self) -> np.ndarray:
        return self._xy

    def node(self, node_id: str) -> Node:
        return self.nodes[self._index[node_id]]

    def index(self, node_id: str) -> int:
        return self._index[node_id]

    def __contains__(self, node_id) -> bool:
        return node_id in self._index

    def link(self, a: str, b: str):
        return self.links.get(frozenset((a, b)))

    def nearest(self, position, k: int = 1) -> list[str]:
        """The ``k`` nodes closest to ``position``; equal distances go to the lower id."""
        d2 = ((self._xy - np.asarray(position, dtype=float)) ** 2).sum(axis=1)
        order = np.lexsort((np.arange(len(d2)), d2))
        return [self.nodes[i].id for i in order[:k]]


@dataclass
class Ue:
    id: str
    slice_id: str
    position: tuple[float, float]
    speed_mps: float = 0.0
    serving: list = field(default_factory=list)
    waypoint: Optional[tuple[float, float]] = None


# --- traffic -------------------------------------------------------------

@dataclass(frozen=True)
class FullBuffer:
    pass


@dataclass(frozen=True)
class PoissonPackets:
    rate_pkts_per_s: float
    packet_bits: float


@dataclass(frozen=True)
class Periodic:
    period_ms: float
    packet_bits: float


TrafficModel = Union[FullBuffer, PoissonPackets, Periodic]


@dataclass(frozen=True)
class OnOff:
    """Gate on packet arrivals: only times with ``(t - phase) mod period < on`` pass."""

    period_ms: float
    on_ms: float
    phase_ms: float = 0.0

    def is_on(self, t_ms: float) -> bool:
        return (t_ms - self.phase_ms) % self.period_ms < self.on_ms


FULL_BUFFER_BITS = 1e12


@dataclass
class Packet:
    flow_id: str
    arrival_ms: float
    bits: float
    remaining: float
    deadline_ms: float = math.inf
    violated: bool = False
    completed_ms: Optional[float] = None

    @property
    def latency_ms(self) -> Optional[float]:
        if self.completed_ms is None:
            return None
        return self.completed_ms - self.arrival_ms


@dataclass(frozen=True)
class Arrival:
    flow_id: str
    time_ms: float
    bits: float


class Flow:
    """Downlink flow towards one UE.

    Packet flows keep a FIFO of eligible packets plus a list of packets that
    arrived mid-window and only become schedulable at the next window start.
    A full-buffer flow has no packets; its backlog is topped up to a large
    constant every window.
    """

    def __init__(self, id: str, ue_id: str, model: TrafficModel, full_buffer_bits: float = FULL_BUFFER_BITS,
                 gate: Optional[OnOff] = None):
        self.id = id
        self.ue_id = ue_id
        self.model = model
        self.gate = gate
        self.full_buffer_bits = full_buffer_bits
        self.queue: deque = deque()
        self.pending: list = []
        self._fb_backlog = full_buffer_bits if isinstance(model, FullBuffer) else 0.0

    @property
    def full_buffer(self) -> bool:
        return isinstance(self.model, FullBuffer)

    @property
    def backlog_bits(self) -> float:
        if self.full_buffer:
            return self._fb_backlog
        return float(sum(p.remaining for p in self.queue))

    @property
    def head(self) -> Optional[Packet]:
        return self.queue[0] if self.queue else None

    def refill(self) -> float:
        """Top up a full-buffer flow; returns the bits added."""
        if not self.full_buffer:
            return 0.0
        added = self.full_buffer_bits - self._fb_backlog
        self._fb_backlog = self.full_buffer_bits
        return added

    def enqueue(self, arrival: Arrival, window_start_ms: float, latency_budget_ms: float = math.inf) -> float:
        """Add a packet; returns the bits that became schedulable immediately."""
        pkt = Packet(self.id, arrival.time_ms, arrival.bits, arrival.bits, arrival.time_ms + latency_budget_ms)
        if arrival.time_ms <= window_start_ms:
            self.queue.append(pkt)
            return pkt.bits
        self.pending.append(pkt)
        return 0.0

    def release_pending(self, window_start_ms: float) -> float:
        ready = [p for p in self.pending if p.arrival_ms <= window_start_ms]
        self.pending = [p for p in self.pending if p.arrival_ms > window_start_ms]
        self.queue.extend(ready)
        return float(sum(p.bits for p in ready))

    def serve(self, bits: float, completion_ms: float) -> tuple[float, list]:
        """Serve up to ``bits`` FIFO; returns (bits served, completed packets)."""
        if self.full_buffer:
            served = min(bits, self._fb_backlog)
            self._fb_backlog -= served
            return served, []
        served = 0.0
        done = []
        while self.queue and bits > 0:
            pkt = self.queue[0]
            take = min(bits, pkt.remaining)
            pkt.remaining -= take
            bits -= take
            served += take
            if pkt.remaining <= 0:
                pkt.remaining = 0.0
                pkt.completed_ms = completion_ms
                done.append(self.queue.popleft())
        return served, done


def generate_traffic(flows: Sequence[Flow], now_ms: float, span_ms: float, rng) -> list[Arrival]:
    """Packet arrivals with times in ``[now_ms, now_ms + span_ms)``.

    Periodic flows emit one packet per period with phase 0; Poisson flows
    draw their count and then uniform arrival times. Full-buffer flows
    produce no arrivals (they are refilled instead).
    """
    out: list[Arrival] = []
    end = now_ms + span_ms
    for flow in flows:
        model = flow.model
        start = len(out)
        if isinstance(model, Periodic):
            k = math.ceil(now_ms / model.period_ms - 1e-9)
            t = k * model.period_ms
            while t < end - 1e-9:
                out.append(Arrival(flow.id, t, float(model.packet_bits)))
                k += 1
                t = k * model.period_ms
        elif isinstance(model, PoissonPackets):
            n = rng.poisson(model.rate_pkts_per_s * span_ms / 1000.0) if model.rate_pkts_per_s > 0 else 0
            if n:
                times = np.sort(rng.uniform(now_ms, end, size=n))
                out.extend(Arrival(flow.id, float(t), float(model.packet_bits)) for t in times)
        if flow.gate is not None:
            out[start:] = [a for a in out[start:] if flow.gate.is_on(a.time_ms)]
    return out


# --- mobility ------------------------------------------------------------

@dataclass(frozen=True)
class CellChange:
    ue_id: str
    old_node: str
    new_node: str


def move_ues(ues: Sequence[Ue], dt_ms: float, rng, topology: Topology, area=None) -> tuple[list[Ue], list[CellChange]]:
    """Random-waypoint step for every UE, in UE-id order.

    ``area`` is ``((xmin, ymin), (xmax, ymax))``; by default the bounding box
    of the nodes. A cell-change event is reported whenever the nearest node
    differs before and after the step.
    """
    if dt_ms <= 0:
        raise ValueError("dt_ms must be positive")
    if area is None:
        xy = topology.positions
        area = (tuple(xy.min(axis=0)), tuple(xy.max(axis=0)))
    (x0, y0), (x1, y1) = area
    moved, events = [], []
    for ue in sorted(ues, key=lambda u: u.id):
        if ue.speed_mps <= 0:
            moved.append(ue)
            continue
        before = topology.nearest(ue.position)[0]
        pos = np.asarray(ue.position, dtype=float)
        wp = ue.waypoint
        step = ue.speed_mps * dt_ms / 1000.0
        # bounded so a degenerate area cannot spin forever
        for _ in range(64):
            if wp is None:
                wp = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
            delta = np.asarray(wp) - pos
            dist = float(np.hypot(*delta))
            if dist > step:
                pos = pos + delta * (step / dist)
                break
            pos = np.asarray(wp, dtype=float)
            step -= dist
            wp = None
            if step <= 0:
                break
        new = replace(ue, position=(float(pos[0]), float(pos[1])), waypoint=wp)
        after = topology.nearest(new.position)[0]
        if after != before:
            events.append(CellChange(ue.id, before, after))
        moved.append(new)
    return moved, events


# --- channel -------------------------------------------------------------

@dataclass(frozen=True)
class ChannelParams:
    model: str = "log_distance"
    pathloss_exponent: float = 3.5
    ref_snr_db: float = 90.0
    min_distance_m: float = 1.0
    fading: bool = True
    se_cap: float = 6.0
    constant_se: float = 2.0


def spectral_efficiency(sinr_db, se_cap: float = 6.0):
    return np.minimum(np.log2(1.0 + 10.0 ** (np.asarray(sinr_db, dtype=float) / 10.0)), se_cap)


class ChannelState:
    """Per (UE, node, RB) SINR and the spectral efficiency derived from it."""

    def __init__(self, ue_ids: Sequence[str], node_ids: Sequence[str], sinr_db: np.ndarray,
                 se_cap: float = 6.0, se: Optional[np.ndarray] = None):
        self.ue_ids = tuple(ue_ids)
        self.node_ids = tuple(node_ids)
        self.sinr_db = np.asarray(sinr_db, dtype=float)
        self.se_cap = se_cap
        self.se = spectral_efficiency(self.sinr_db, se_cap) if se is None else np.asarray(se, dtype=float)
        self._ue = {u: i for i, u in enumerate(self.ue_ids)}
        self._node = {n: i for i, n in enumerate(self.node_ids)}

    @classmethod
    def from_se(cls, ue_ids, node_ids, se: np.ndarray, se_cap: float = 6.0) -> "ChannelState":
        """Build a state from spectral efficiencies directly (exact se values)."""
        se = np.asarray(se, dtype=float)
        with np.errstate(divide="ignore"):
            sinr = 10.0 * np.log10(np.maximum(2.0 ** se - 1.0, 0.0))
        return cls(ue_ids, node_ids, sinr, se_cap, se=se)

    def spectral_efficiency(self, ue_id: str, node_id: str, rb: int) -> float:
        return float(self.se[self._ue[ue_id], self._node[node_id], rb])

    def se_row(self, ue_id: str, node_id: str) -> np.ndarray:
        return self.se[self._ue[ue_id], self._node[node_id]]

    def has_ue(self, ue_id: str) -> bool:
        return ue_id in self._ue

    def digest(self) -> bytes:
        return self.se.tobytes() + self.sinr_db.tobytes()


def step_channel(ues: Sequence[Ue], topology: Topology, n_rb: int, rng, params: ChannelParams = ChannelParams()) -> ChannelState:
    """Fresh channel snapshot for one window.

    Log-distance pathloss from the UE-node distance (clamped to
    ``min_distance_m``) plus per-RB Rayleigh block fading redrawn on every
    call. The ``constant`` model returns ``constant_se`` everywhere and
    draws nothing.
    """
    ue_ids = [u.id for u in ues]
    shape = (len(ues), len(topology.nodes), n_rb)
    if params.model == "constant":
        se = np.full(shape, min(params.constant_se, params.se_cap))
        return ChannelState.from_se(ue_ids, topology.node_ids, se, params.se_cap)
    pos = np.array([u.position for u in ues], dtype=float).reshape(-1, 2)
    d = np.sqrt(((pos[:, None, :] - topology.positions[None, :, :]) ** 2).sum(axis=2))
    d = np.maximum(d, params.min_distance_m)
    mean_db = params.ref_snr_db - 10.0 * params.pathloss_exponent * np.log10(d)
    sinr = np.repeat(mean_db[:, :, None], n_rb, axis=2)
    if params.fading:
        gain = rng.exponential(1.0, size=shape)
        sinr = sinr + 10.0 * np.log10(np.maximum(gain, 1e-12))
    return ChannelState(ue_ids, topology.node_ids, sinr, params.se_cap)
