"""Multi-connectivity: radio legs, anchor placement and leg combining."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class AnchorError(ValueError):
    pass


@dataclass(frozen=True)
class TransportLink:
    a: str
    b: str
    latency_ms: float = 0.0
    capacity_bps: float = 0.0

    def __post_init__(self):
        if self.latency_ms < 0 or self.capacity_bps < 0:
            raise ValueError(f"link {self.a}-{self.b}: latency and capacity must be >= 0")

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


def link_table(links: Sequence[TransportLink]) -> dict:
    return {link.key: link for link in links}


@dataclass(frozen=True)
class McLimits:
    mac_latency_limit_ms: float = 0.25
    mac_capacity_floor_bps: float = 10e9


@dataclass(frozen=True)
class McConfig:
    ue_id: str
    legs: tuple
    anchor: str = "common_pdcp"  # common_pdcp | common_mac
    mode: str = "split"  # split | duplicate

    def __post_init__(self):
        if not self.legs:
            raise AnchorError(f"UE {self.ue_id}: at least one leg required")
        if len(set(self.legs)) != len(self.legs):
            raise AnchorError(f"UE {self.ue_id}: legs must be distinct")
        if self.anchor not in ("common_pdcp", "common_mac"):
            raise AnchorError(f"UE {self.ue_id}: unknown anchor {self.anchor!r}")
        if self.mode not in ("split", "duplicate"):
            raise AnchorError(f"UE {self.ue_id}: unknown mode {self.mode!r}")

    @property
    def anchor_node(self) -> str:
        return self.legs[0]


def validate_anchor(cfg: McConfig, topology, limits: McLimits = McLimits()) -> McConfig:
    """Check that a common-MAC anchor is feasible for the configured legs.

    Common PDCP is always accepted. Common MAC needs all legs on one site or
    every leg pair joined by a link within the latency limit and above the
    capacity floor.
    """
    for leg in cfg.legs:
        if leg not in topology:
            raise AnchorError(f"UE {cfg.ue_id}: unknown node {leg}")
    if cfg.anchor == "common_pdcp" or len(cfg.legs) == 1:
        return cfg
    sites = {topology.node(leg).site_id for leg in cfg.legs}
    if len(sites) == 1:
        return cfg
    for a, b in _pairs(cfg.legs):
        link = topology.link(a, b)
        if link is None:
            raise AnchorError(f"UE {cfg.ue_id}: common MAC needs a transport link between {a} and {b}")
        if link.latency_ms > limits.mac_latency_limit_ms or link.capacity_bps < limits.mac_capacity_floor_bps:
            raise AnchorError(
                f"UE {cfg.ue_id}: link {a}-{b} ({link.latency_ms} ms, {link.capacity_bps:g} bit/s) "
                f"too slow for common MAC (limit {limits.mac_latency_limit_ms} ms, "
                f"floor {limits.mac_capacity_floor_bps:g} bit/s)"
            )
    return cfg


def _pairs(legs):
    legs = sorted(legs)
    return [(legs[i], legs[j]) for i in range(len(legs)) for j in range(i + 1, len(legs))]


def aggregate_throughput(per_leg_bits: Sequence[float]) -> float:
    return float(sum(per_leg_bits))


def duplicate_reliability(per_leg_per: Sequence[float]) -> float:
    """Packet error rate after duplicating over independent legs."""
    if not per_leg_per:
        raise ValueError("at least one leg PER required")
    for p in per_leg_per:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"PER {p} outside [0, 1]")
    return float(math.prod(per_leg_per))


def duplicate_reliability_mc(per_leg_per: Sequence[float], n_packets: int, rng, chunk: int = 1_000_000) -> tuple[int, float]:
    """Monte Carlo check: ``(lost, lost / n)`` when a packet is lost only if every copy is."""
    lost = 0
    left = n_packets
    p = np.asarray(per_leg_per, dtype=float)[:, None]
    while left > 0:
        m = min(chunk, left)
        lost += int((rng.random((p.shape[0], m)) < p).all(axis=0).sum())
        left -= m
    return lost, lost / n_packets


@dataclass(frozen=True)
class CoordinationFlags:
    joint_scheduling: bool
    reassembly_at_anchor: bool


def coordination_bonus(cfg: McConfig) -> CoordinationFlags:
    if cfg.anchor == "common_mac":
        return CoordinationFlags(joint_scheduling=True, reassembly_at_anchor=False)
    return CoordinationFlags(joint_scheduling=False, reassembly_at_anchor=True)


def reassembly_latency_ms(cfg: McConfig, topology) -> float:
    """Extra delivery delay at the anchor: the slowest leg's transport latency for common PDCP."""
    if cfg.anchor == "common_mac" or len(cfg.legs) == 1:
        return 0.0
    worst = 0.0
    for leg in cfg.legs[1:]:
        link = topology.link(cfg.anchor_node, leg)
        worst = max(worst, link.latency_ms if link is not None else 0.0)
    return worst
