"""Scenario files: YAML documents checked against ``scenario.schema.json``.

:func:`load_scenario` parses, validates the schema, resolves every
cross-reference and runs each module's own validators. All problems found
are reported together, each tagged with the field path it came from.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import yaml

from ..broker import AdmissionPolicy, BrokerError, RequestClass, SliceRequest
from ..grid import GridError, Numerology, build_grid, carve_tiles, numerology_table
from ..multiconn import AnchorError, McConfig, McLimits, TransportLink, link_table, validate_anchor
from ..radio import (ChannelParams, FULL_BUFFER_BITS, FullBuffer, Node, OnOff, Periodic, PoissonPackets,
                     Topology)
from ..scheduling import (FairnessWithFloor, MaxSpectralEfficiency, Reservation, SchedulingError, SdmxPolicy,
                          SlicePolicy, StaticSplit, WeightedFair)
from ..slices import SliceBlueprint, SliceError, Sla, Tenant, sla_preset, validate_blueprint
from ..uca import SignalingCosts


class ScenarioError(ValueError):
    """Validation failure; ``errors`` is a list of ``(field path, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"{p or '<root>'}: {m}" for p, m in self.errors))


def schema() -> dict:
    text = resources.files("netslice.scenarios").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def shipped(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``shipped("minimal")``."""
    return Path(str(resources.files("netslice.scenarios").joinpath(f"{name}.yaml")))


SHIPPED = ("minimal", "closed_form", "multiplexing", "scarcity", "deterministic", "uca_grid", "options")


@dataclass
class UeSpec:
    id: str
    position: tuple
    speed_mps: float = 0.0
    flow: Optional[dict] = None


@dataclass
class SliceSpec:
    id: str
    blueprint_id: str
    ues: list = field(default_factory=list)


@dataclass
class BrokerConfig:
    policy: AdmissionPolicy
    classes: list
    trace: Optional[list]
    horizon_windows: int
    threshold_grid: list
    offline_cap: int = 40


@dataclass
class UcaConfig:
    enabled: bool = False
    k: int = 3
    costs: SignalingCosts = SignalingCosts()


@dataclass
class Scenario:
    raw: dict
    name: str
    seed: int
    duration_windows: int
    grid: object
    numerologies: dict
    tiling: object
    topology: Topology
    area: tuple
    channel: ChannelParams
    full_buffer_bits: float
    tenants: dict
    blueprints: dict
    slice_policies: dict
    ue_templates: dict
    slices: list
    sdmx: SdmxPolicy
    broker: Optional[BrokerConfig]
    mc_configs: dict
    mc_limits: McLimits
    leg_per: dict
    uca: UcaConfig

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)

    def with_seed(self, seed: int) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return build_scenario(raw)


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical scenario document, seed excluded."""
    doc = {k: v for k, v in raw.items() if k != "seed"}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError([("", f"parse error: {exc}")]) from None
    if not isinstance(raw, dict):
        raise ScenarioError([("", "scenario must be a mapping")])
    raw.setdefault("name", path.stem)
    return build_scenario(raw)


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _dup(items, key, where, errors):
    seen = set()
    for i, item in enumerate(items):
        v = item[key]
        if v in seen:
            errors.append((f"{where}[{i}].{key}", f"duplicate id {v!r}"))
        seen.add(v)
    return seen


def flow_model(spec: Optional[dict]):
    """``(model, gate)`` for a flow mapping; ``(None, None)`` when the UE has no flow."""
    if spec is None or spec["model"] == "none":
        return None, None
    kind = spec["model"]
    if kind == "full_buffer":
        model = FullBuffer()
    elif kind == "poisson":
        model = PoissonPackets(float(spec.get("rate_pkts_per_s", 0.0)), float(spec.get("packet_bits", 1000)))
    else:
        if "period_ms" not in spec:
            raise ScenarioError([("flow.period_ms", "periodic flow needs period_ms")])
        model = Periodic(float(spec["period_ms"]), float(spec.get("packet_bits", 1000)))
    gate = None
    if "on_off" in spec:
        g = spec["on_off"]
        gate = OnOff(float(g["period_ms"]), float(g["on_ms"]), float(g.get("phase_ms", 0.0)))
    return model, gate


def build_scenario(raw: dict) -> Scenario:
    validator = jsonschema.Draft202012Validator(schema())
    errors = [(_path(e.absolute_path), e.message) for e in sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))]
    if errors:
        raise ScenarioError(errors)

    g = raw["grid"]
    try:
        grid = build_grid(g["n_rb"], g["slots_per_window"], g.get("window_ms", 10.0))
    except GridError as exc:
        errors.append(("grid", str(exc)))
        # keep going on a stand-in grid so the remaining checks still report
        grid = build_grid(max(g["n_rb"], 1), max(g["slots_per_window"], 1), g.get("window_ms", 10.0))

    num_specs = raw.get("numerologies") or [{"id": 0}]
    try:
        nums = numerology_table(
            Numerology(n["id"], n.get("cell_duration_ms", grid.slot_ms), n.get("cell_bandwidth_rb", 1),
                       n.get("symbols_per_cell", 168))
            for n in num_specs
        )
    except GridError as exc:
        errors.append(("numerologies", str(exc)))
        nums = {}

    tiling = None
    tile_specs = raw.get("tiles") or [{"id": "t0", "rb": [0, grid.n_rb], "slot": [0, grid.slots_per_window],
                                       "numerology": min(nums) if nums else 0}]
    for i, t in enumerate(tile_specs):
        if t.get("numerology", 0) not in nums:
            errors.append((f"tiles[{i}].numerology", f"unknown numerology {t.get('numerology', 0)}"))
    try:
        tiling = carve_tiles(grid, tile_specs)
    except GridError as exc:
        errors.append(("tiles", str(exc)))

    topo_raw = raw["topology"]
    node_ids = _dup(topo_raw["nodes"], "id", "topology.nodes", errors)
    links = []
    for i, l in enumerate(topo_raw.get("links", [])):
        for end in ("a", "b"):
            if l[end] not in node_ids:
                errors.append((f"topology.links[{i}].{end}", f"unknown node {l[end]!r}"))
        links.append(TransportLink(l["a"], l["b"], l.get("latency_ms", 0.0), l.get("capacity_bps", 0.0)))
    nodes = [Node(n["id"], tuple(n["position"]), n.get("site", n["id"]), n.get("edge_cloud", False))
             for n in topo_raw["nodes"]]
    try:
        topology = Topology(tuple(nodes), link_table(links))
    except ValueError as exc:
        raise ScenarioError(errors + [("topology.nodes", str(exc))]) from None
    if "area" in topo_raw:
        area = tuple(tuple(p) for p in topo_raw["area"])
    else:
        xy = topology.positions
        area = (tuple(float(v) for v in xy.min(axis=0)), tuple(float(v) for v in xy.max(axis=0)))

    channel = ChannelParams(**raw.get("channel", {}))
    fb_bits = float(raw.get("traffic", {}).get("full_buffer_bits", FULL_BUFFER_BITS))

    tenants_raw = raw.get("tenants", [])
    tenant_ids = _dup(tenants_raw, "id", "tenants", errors)
    tenants = {t["id"]: Tenant(t["id"], t.get("name", t["id"]), t.get("operator", False)) for t in tenants_raw}

    _dup(raw["blueprints"], "id", "blueprints", errors)
    blueprints, policies, templates = {}, {}, {}
    for i, b in enumerate(raw["blueprints"]):
        where = f"blueprints[{i}]"
        if tenants_raw and b["tenant"] not in tenant_ids:
            errors.append((f"{where}.tenant", f"unknown tenant {b['tenant']!r}"))
        elif b["tenant"] not in tenants:
            tenants[b["tenant"]] = Tenant(b["tenant"], b["tenant"])
        try:
            sla_raw = dict(b.get("sla", {}))
            preset = sla_raw.pop("preset", None)
            sla = sla_preset(preset, **sla_raw) if preset else Sla(**sla_raw)
            bp = SliceBlueprint(b["id"], b["tenant"], b.get("sharing_group", "A"), b.get("ran_option", 1), sla,
                                tuple(b["nf_chain"]), b.get("numerology", 0), b.get("slice_aware_ue", False))
            bp = validate_blueprint(bp, nums.keys())
            blueprints[bp.id] = bp
            if tiling is not None and not tiling.numerology_cells(bp.numerology).any():
                errors.append((f"{where}.numerology", f"no tile carries numerology {bp.numerology}"))
        except SliceError as exc:
            errors.append((where, str(exc)))
        try:
            policies[b["id"]] = SlicePolicy(**b.get("scheduler", {}))
        except SchedulingError as exc:
            errors.append((f"{where}.scheduler", str(exc)))
        templates[b["id"]] = b.get("ue_template", {"count": 1, "flow": {"model": "full_buffer"}})

    slices_raw = raw.get("slices", [])
    slice_ids = _dup(slices_raw, "id", "slices", errors)
    all_ues = [(f"slices[{i}].ues[{j}]", u) for i, s in enumerate(slices_raw) for j, u in enumerate(s.get("ues", []))]
    seen_ue = set()
    for where, u in all_ues:
        if u["id"] in seen_ue:
            errors.append((f"{where}.id", f"duplicate UE id {u['id']!r}"))
        seen_ue.add(u["id"])
    slices = []
    for i, s in enumerate(slices_raw):
        if s["blueprint"] not in blueprints and s["blueprint"] not in {b["id"] for b in raw["blueprints"]}:
            errors.append((f"slices[{i}].blueprint", f"unknown blueprint {s['blueprint']!r}"))
        ues = [UeSpec(u["id"], tuple(u["position"]), u.get("speed_mps", 0.0), u.get("flow")) for u in s.get("ues", [])]
        for j, u in enumerate(s.get("ues", [])):
            try:
                flow_model(u.get("flow"))
            except ScenarioError as exc:
                errors.extend((f"slices[{i}].ues[{j}].{p}", m) for p, m in exc.errors)
        slices.append(SliceSpec(s["id"], s["blueprint"], ues))

    sdmx_raw = raw.get("sdmx", {})
    sdmx = SdmxPolicy()
    broker_blueprints = set()
    try:
        kind = sdmx_raw.get("objective", "weighted_fair")
        if kind == "static_split":
            shares = sdmx_raw.get("shares") or {s.id: 1.0 for s in slices}
            obj = StaticSplit(dict(shares))
        elif kind == "weighted_fair":
            obj = WeightedFair(sdmx_raw.get("weights"))
        elif kind == "max_se":
            obj = MaxSpectralEfficiency()
        else:
            obj = FairnessWithFloor(dict(sdmx_raw.get("floors", {})), sdmx_raw.get("weights"))
            if sum(obj.floors.values()) > grid.n_cells:
                errors.append(("sdmx.floors", f"floors exceed the {grid.n_cells} grid cells"))
        for key in ("shares", "weights", "floors"):
            for sid in sdmx_raw.get(key, {}) or {}:
                if sid not in slice_ids:
                    errors.append((f"sdmx.{key}.{sid}", f"unknown slice {sid!r}"))
        reservations = []
        taken = {}
        for i, r in enumerate(sdmx_raw.get("reservations", [])):
            if r["slice"] not in slice_ids:
                errors.append((f"sdmx.reservations[{i}].slice", f"unknown slice {r['slice']!r}"))
            cells = frozenset(tuple(c) for c in r["cells"])
            for c in sorted(cells):
                if not grid.contains(c):
                    errors.append((f"sdmx.reservations[{i}].cells", f"cell {c} outside the grid"))
                elif c in taken:
                    errors.append((f"sdmx.reservations[{i}].cells", f"cell {c} already reserved for {taken[c]}"))
                taken[c] = r["slice"]
            reservations.append(Reservation(r["slice"], cells, r.get("period_windows", 1)))
        blacklist = {}
        for sid, cells in (sdmx_raw.get("blacklist") or {}).items():
            if sid not in slice_ids:
                errors.append((f"sdmx.blacklist.{sid}", f"unknown slice {sid!r}"))
            blacklist[sid] = frozenset(tuple(c) for c in cells)
        sdmx = SdmxPolicy(obj, tuple(reservations), blacklist)
    except SchedulingError as exc:
        errors.append(("sdmx", str(exc)))

    broker = None
    if "broker" in raw:
        b = raw["broker"]
        try:
            pol = b.get("policy", {"kind": "greedy"})
            policy = AdmissionPolicy(pol["kind"], tuple(pol.get("thresholds", ())))
            classes = []
            for i, c in enumerate(b.get("classes", [])):
                if c["blueprint"] not in blueprints:
                    errors.append((f"broker.classes[{i}].blueprint", f"unknown blueprint {c['blueprint']!r}"))
                    continue
                classes.append(RequestClass(c["id"], c["blueprint"], blueprints[c["blueprint"]].tenant_id,
                                            c["rate_per_window"], tuple(c["demand_cells"]), tuple(c["duration_windows"]),
                                            c["price_per_cell_window"], c.get("penalty_per_violation", 0.0)))
                broker_blueprints.add(c["blueprint"])
            trace = None
            if "trace" in b:
                trace = []
                for i, t in enumerate(b["trace"]):
                    if t["blueprint_id"] not in blueprints:
                        errors.append((f"broker.trace[{i}].blueprint_id", f"dangling reference to blueprint {t['blueprint_id']!r}"))
                        continue
                    if t["demand_cells_per_window"] > grid.n_cells:
                        errors.append((f"broker.trace[{i}].demand_cells_per_window", "demand exceeds the grid"))
                        continue
                    rec = dict(t)
                    rec.setdefault("tenant_id", blueprints[t["blueprint_id"]].tenant_id)
                    rec.setdefault("price_per_window", 0.0)
                    rec.setdefault("penalty_per_violation", 0.0)
                    rec.setdefault("class_id", 0)
                    trace.append(SliceRequest(**rec))
                    broker_blueprints.add(t["blueprint_id"])
            if policy.kind == "threshold":
                n_cls = max([c.id for c in classes] + [r.class_id for r in trace or []] + [-1]) + 1
                if len(policy.thresholds) < n_cls:
                    errors.append(("broker.policy.thresholds", f"need {n_cls} per-class thresholds"))
            broker = BrokerConfig(policy, classes, trace, b.get("horizon_windows", raw["duration_windows"]),
                                  [list(v) for v in b.get("threshold_grid", [])], b.get("offline_cap", 40))
        except BrokerError as exc:
            errors.append(("broker", str(exc)))

    mc_raw = raw.get("multiconn", {})
    limits = McLimits(mc_raw.get("mac_latency_limit_ms", 0.25), mc_raw.get("mac_capacity_floor_bps", 10e9))
    mc_configs, leg_per = {}, {}
    for i, c in enumerate(mc_raw.get("configs", [])):
        where = f"multiconn.configs[{i}]"
        if c["ue"] not in seen_ue:
            errors.append((f"{where}.ue", f"unknown UE {c['ue']!r}"))
            continue
        if c["ue"] in mc_configs:
            errors.append((f"{where}.ue", f"second multi-connectivity config for {c['ue']!r}"))
        missing = [n for n in c["legs"] if n not in node_ids]
        if missing:
            errors.append((f"{where}.legs", f"unknown nodes {missing}"))
            continue
        try:
            cfg = validate_anchor(McConfig(c["ue"], tuple(c["legs"]), c.get("anchor", "common_pdcp"),
                                           c.get("mode", "split")), topology, limits)
            mc_configs[c["ue"]] = cfg
        except AnchorError as exc:
            errors.append((where, str(exc)))
        if "leg_per" in c:
            if len(c["leg_per"]) != len(c["legs"]):
                errors.append((f"{where}.leg_per", "one PER per leg required"))
            leg_per[c["ue"]] = tuple(c["leg_per"])

    u = raw.get("uca", {})
    uca = UcaConfig(u.get("enabled", False), u.get("k", 3), SignalingCosts(**u.get("costs", {})))
    if uca.enabled and uca.k > len(topology.nodes):
        errors.append(("uca.k", f"UCA size {uca.k} exceeds the {len(topology.nodes)} nodes"))

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        raw=raw, name=raw.get("name", "scenario"), seed=int(raw.get("seed", 0)),
        duration_windows=int(raw["duration_windows"]), grid=grid, numerologies=nums, tiling=tiling,
        topology=topology, area=area, channel=channel, full_buffer_bits=fb_bits, tenants=tenants,
        blueprints=blueprints, slice_policies=policies, ue_templates=templates, slices=slices, sdmx=sdmx,
        broker=broker, mc_configs=mc_configs, mc_limits=limits, leg_per=leg_per, uca=uca,
    )
