"""User-centric connection areas and mobility signaling accounting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class SignalingCosts:
    """Messages charged per event; ``reform`` of None means k + 2."""

    intra: int = 1
    reform: int | None = None
    pathswitch: int = 2
    ho_ran: int = 4
    ho_cn: int = 2

    def reform_cost(self, k: int) -> int:
        return k + 2 if self.reform is None else self.reform


@dataclass(frozen=True)
class Uca:
    ue_id: str
    nodes: tuple
    anchor: str
    context_shared: bool = True
    bearer_node: str = ""

    def __post_init__(self):
        if not self.nodes:
            raise ValueError(f"UCA of {self.ue_id} is empty")
        if self.anchor not in self.nodes:
            raise ValueError(f"UCA of {self.ue_id}: anchor {self.anchor} not in its node set")


@dataclass
class SignalingCounters:
    ran_messages: int = 0
    cn_messages: int = 0
    by_event: dict = field(default_factory=dict)

    def add(self, other: "SignalingCounters") -> "SignalingCounters":
        self.ran_messages += other.ran_messages
        self.cn_messages += other.cn_messages
        for k, v in other.by_event.items():
            self.by_event[k] = self.by_event.get(k, 0) + v
        return self

    def to_dict(self) -> dict:
        return {"ran_messages": self.ran_messages, "cn_messages": self.cn_messages,
                "by_event": dict(sorted(self.by_event.items()))}


def form_uca(ue, topology, k: int) -> Uca:
    """UCA of the ``k`` nodes nearest to the UE, anchored (and CN bearer terminated) at the nearest."""
    if k < 1:
        raise ValueError("UCA size must be >= 1")
    if k > len(topology.nodes):
        raise ValueError(f"UCA size {k} exceeds the {len(topology.nodes)} nodes in the topology")
    nodes = topology.nearest(ue.position, k)
    return Uca(ue.id, tuple(nodes), nodes[0], True, nodes[0])


def on_cell_change(uca: Uca, ue, new_node: str, topology, k: int, costs: SignalingCosts = SignalingCosts()):
    """Handle a serving-node change; returns ``(uca, delta)``.

    Inside the UCA the RAN absorbs the move and the CN sees nothing. Leaving
    it re-forms the UCA around the UE and switches the CN path to the new
    anchor.
    """
    delta = SignalingCounters()
    if new_node in uca.nodes:
        delta.ran_messages = costs.intra
        delta.by_event["intra_uca"] = 1
        return uca, delta
    fresh = form_uca(ue, topology, k)
    if fresh.anchor != new_node and new_node in fresh.nodes:
        fresh = replace(fresh, anchor=new_node, bearer_node=new_node)
    delta.ran_messages = costs.reform_cost(k)
    delta.cn_messages = costs.pathswitch
    delta.by_event["inter_uca"] = 1
    return fresh, delta


def baseline_handover(ue, change=None, costs: SignalingCosts = SignalingCosts()) -> SignalingCounters:
    """CN-anchored handover: every cell change costs RAN and CN messages."""
    if change is None:
        return SignalingCounters()
    return SignalingCounters(costs.ho_ran, costs.ho_cn, {"handover": 1})
