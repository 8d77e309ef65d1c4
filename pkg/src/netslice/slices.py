"""Slice blueprints, SLAs, tenants and the dedicated/common function split."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional


class SliceError(ValueError):
    pass


class LifecycleError(SliceError):
    pass


class NF(str, Enum):
    LOWER_PHY = "RAN-lower-PHY"
    UPPER_PHY = "RAN-upper-PHY"
    MAC = "MAC"
    RLC = "RLC"
    PDCP = "PDCP"
    RRC = "RRC"
    CN_MOBILITY = "CN-mobility"
    CN_IDENTITY = "CN-identity"
    CN_SUBSCRIPTION = "CN-subscription"
    CN_SESSION = "CN-session"
    CN_USERPLANE = "CN-userplane"

    @property
    def is_ran(self) -> bool:
        return self in RAN_FUNCTIONS


RAN_FUNCTIONS = frozenset({NF.LOWER_PHY, NF.UPPER_PHY, NF.MAC, NF.RLC, NF.PDCP, NF.RRC})
CN_FUNCTIONS = frozenset(set(NF) - RAN_FUNCTIONS)

# CN functions that are shared across slices, per sharing group
_COMMON_CN = {
    "A": frozenset(),
    "B": frozenset({NF.CN_IDENTITY, NF.CN_SUBSCRIPTION, NF.CN_MOBILITY}),
    "C": frozenset({NF.CN_IDENTITY, NF.CN_SUBSCRIPTION, NF.CN_MOBILITY, NF.CN_SESSION}),
}


def parse_nf(tag) -> NF:
    if isinstance(tag, NF):
        return tag
    aliases = {"lower-PHY": NF.LOWER_PHY, "upper-PHY": NF.UPPER_PHY}
    if tag in aliases:
        return aliases[tag]
    try:
        return NF(tag)
    except ValueError:
        raise SliceError(f"unknown network function tag {tag!r}") from None


@dataclass(frozen=True)
class Sla:
    min_throughput_bps: float = 0.0
    latency_budget_ms: float = 100.0
    max_per: float = 1e-4
    deterministic_traffic: bool = False
    priority_weight: float = 1.0

    def __post_init__(self):
        if self.min_throughput_bps < 0:
            raise SliceError("min_throughput_bps must be >= 0")
        if self.latency_budget_ms <= 0:
            raise SliceError("latency_budget_ms must be > 0")
        if not 0 < self.max_per <= 1:
            raise SliceError("max_per must lie in (0, 1]")
        if self.priority_weight <= 0:
            raise SliceError("priority_weight must be > 0")


SLA_PRESETS = {
    "mbb": Sla(max_per=1e-4),
    "machine-kinaesthetic": Sla(latency_budget_ms=1.0, deterministic_traffic=True),
    "human-kinaesthetic": Sla(latency_budget_ms=5.0),
    "tactile-info": Sla(latency_budget_ms=100.0),
}


def sla_preset(name: str, **overrides) -> Sla:
    try:
        base = SLA_PRESETS[name]
    except KeyError:
        raise SliceError(f"unknown SLA preset {name!r}; known: {sorted(SLA_PRESETS)}") from None
    return replace(base, **overrides)


@dataclass(frozen=True)
class Tenant:
    id: str
    name: str = ""
    operator: bool = False


@dataclass(frozen=True)
class SliceBlueprint:
    id: str
    tenant_id: str
    sharing_group: str
    ran_option: int
    sla: Sla
    nf_chain: tuple
    numerology: int = 0
    slice_aware_ue: bool = False


def validate_blueprint(bp: SliceBlueprint, numerologies: Optional[Iterable[int]] = None) -> SliceBlueprint:
    """Return ``bp`` with its chain normalised to :class:`NF` members."""
    chain = tuple(parse_nf(t) for t in bp.nf_chain)
    seen = set()
    for tag in chain:
        if tag in seen:
            raise SliceError(f"blueprint {bp.id}: duplicate network function {tag.value}")
        seen.add(tag)
    if not seen & RAN_FUNCTIONS:
        raise SliceError(f"blueprint {bp.id}: chain has no RAN function")
    if not seen & CN_FUNCTIONS:
        raise SliceError(f"blueprint {bp.id}: chain has no CN function")
    if bp.sharing_group not in _COMMON_CN:
        raise SliceError(f"blueprint {bp.id}: sharing group must be A, B or C")
    if bp.ran_option not in (1, 2, 3):
        raise SliceError(f"blueprint {bp.id}: RAN option must be 1, 2 or 3")
    if numerologies is not None and bp.numerology not in set(numerologies):
        raise SliceError(f"blueprint {bp.id}: unknown numerology {bp.numerology}")
    return replace(bp, nf_chain=chain)


def split_functions(bp: SliceBlueprint) -> tuple[frozenset, frozenset]:
    """Partition the chain into ``(dedicated, common)`` function sets.

    Every sharing group keeps the RAN common; the groups differ only in how
    much of the CN control plane is shared.
    """
    shared_cn = _COMMON_CN[bp.sharing_group]
    chain = [parse_nf(t) for t in bp.nf_chain]
    common = frozenset(t for t in chain if t in RAN_FUNCTIONS or t in shared_cn)
    dedicated = frozenset(chain) - common
    return dedicated, common


class State(str, Enum):
    REQUESTED = "Requested"
    ADMITTED = "Admitted"
    ACTIVE = "Active"
    TERMINATED = "Terminated"


_TRANSITIONS = {
    (State.REQUESTED, "admit"): State.ADMITTED,
    (State.REQUESTED, "reject"): State.TERMINATED,
    (State.ADMITTED, "activate"): State.ACTIVE,
    (State.ACTIVE, "terminate"): State.TERMINATED,
}


@dataclass(frozen=True)
class SliceInstance:
    id: str
    blueprint: SliceBlueprint
    state: State = State.REQUESTED
    dedicated_nfs: frozenset = field(default_factory=frozenset)
    common_nfs: frozenset = field(default_factory=frozenset)
    admitted_window: tuple = (0, 0)


def instantiate(instance_id: str, bp: SliceBlueprint, admitted_window=(0, 0)) -> SliceInstance:
    dedicated, common = split_functions(bp)
    return SliceInstance(instance_id, bp, State.REQUESTED, dedicated, common, tuple(admitted_window))


def transition(instance: SliceInstance, event: str) -> SliceInstance:
    try:
        nxt = _TRANSITIONS[(instance.state, event)]
    except KeyError:
        raise LifecycleError(
            f"slice {instance.id}: event {event!r} not allowed in state {instance.state.value}"
        ) from None
    return replace(instance, state=nxt)
