"""Deterministic per-window simulation loop.

Every window runs the same fixed sequence of steps:

1. arrivals (mid-window packets of the previous window become eligible,
   full-buffer flows are refilled, new arrivals are drawn)
2. admission (expired requests end, arriving requests are decided)
3. channel step
4. mask computation, including the common-MAC split for Option 2 slices
5. per-domain, per-slice scheduling
6. multi-connectivity reassembly and latency accounting
7. mobility and UCA signaling
8. revenue settlement

Invariants are checked at the end of every window and raise
:class:`InvariantViolation` naming the property that broke.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..broker import Admission, AdmissionPolicy, generate_trace, settle_window
from ..grid import ResourceMask
from ..multiconn import duplicate_reliability, reassembly_latency_ms
from ..radio import Flow, Ue, generate_traffic, move_ues, step_channel
from ..scheduling import (FairnessWithFloor, FloorError, ReservationError, SliceDemand,
                          SliceSchedulerState, apply_option, build_preschedule, check_isolation,
                          common_mac_split, compute_masks, largest_remainder, schedule_prescheduled,
                          schedule_within_mask, update_pf_average)
from ..slices import instantiate, transition
from ..uca import SignalingCounters, baseline_handover, form_uca, on_cell_change
from .report import MetricsReport, percentile
from .scenario import Scenario, flow_model

STREAMS = ("channel", "traffic", "mobility", "broker", "placement")


class InvariantViolation(RuntimeError):
    def __init__(self, invariant: str, detail: str, window: Optional[int] = None):
        self.invariant = invariant
        self.window = window
        where = f" at window {window}" if window is not None else ""
        super().__init__(f"invariant '{invariant}' violated{where}: {detail}")


def streams(seed: int) -> dict:
    """Independent generators per module, split from one seed.

    Children are spawned by position, so adding a stream at the end leaves
    the existing ones untouched.
    """
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


def scenario_trace(scenario: Scenario, rng=None, seed: Optional[int] = None) -> list:
    """The request trace a run sees: the scenario's own, else drawn from the broker stream."""
    b = scenario.broker
    if b is None:
        return []
    if b.trace is not None:
        return list(b.trace)
    if rng is None:
        rng = streams(scenario.seed if seed is None else seed)["broker"]
    return generate_trace(b.classes, b.horizon_windows, rng, scenario.grid.n_cells)


@dataclass
class _Slice:
    id: str
    blueprint: object
    policy: object
    symbols: int
    instance: object
    request: object = None
    ues: list = field(default_factory=list)
    pf: SliceSchedulerState = field(default_factory=SliceSchedulerState)
    rr: dict = field(default_factory=dict)


def _domains(topology, mc_configs) -> list[tuple]:
    """Scheduling domains: nodes joined by common-MAC leg sets (union-find)."""
    parent = {n: n for n in topology.node_ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for cfg in mc_configs.values():
        if cfg.anchor == "common_mac":
            for leg in cfg.legs[1:]:
                a, b = find(cfg.legs[0]), find(leg)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    groups: dict = {}
    for n in topology.node_ids:
        groups.setdefault(find(n), []).append(n)
    return sorted(tuple(sorted(g)) for g in groups.values())


class Engine:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None, trace=None,
                 admission: Optional[AdmissionPolicy] = None):
        self.sc = scenario
        self.seed = scenario.seed if seed is None else int(seed)
        self.rng = streams(self.seed)
        self.grid = scenario.grid
        self.window_ms = self.grid.window_ms
        self.topology = scenario.topology
        self.domains = _domains(self.topology, scenario.mc_configs)
        self.domain_of = {n: d for d in self.domains for n in d}
        self.slices: dict[str, _Slice] = {}
        self.ues: dict[str, Ue] = {}
        self.flows: dict[str, list] = {}
        self.latencies: dict[str, list] = {}
        self.lat_violations: dict[str, int] = {}
        self.serving: dict[str, list] = {}
        self.ucas: dict = {}
        self.uca_totals = SignalingCounters()
        self.base_totals = SignalingCounters()
        self.report = MetricsReport(meta={
            "scenario": scenario.name,
            "seed": self.seed,
            "config_hash": scenario.config_hash,
            "duration_windows": scenario.duration_windows,
        })
        self.served_by_slice: dict[str, float] = {}
        self.mc_leg_bits: dict[str, dict] = {}
        self.n_demotions = 0
        self.lifecycle: list = []

        self.admission = None
        self.requests: dict[int, list] = {}
        if scenario.broker is not None:
            b = scenario.broker
            policy = admission or b.policy
            self.admission = Admission(policy, self.grid.n_cells)
            if trace is None:
                trace = scenario_trace(scenario, self.rng["broker"])
            for r in trace:
                self.requests.setdefault(r.arrival_window, []).append(r)
            self.report.meta["admission_policy"] = policy.label()
            self.report.meta["requests"] = len(trace)
        self.report.meta["sdmx_objective"] = type(scenario.sdmx.objective).__name__

        for spec in scenario.slices:
            self._add_slice(spec.id, spec.blueprint_id, [
                (u.id, u.position, u.speed_mps, u.flow) for u in spec.ues
            ], window=0)

    # --- population -------------------------------------------------------

    def _add_slice(self, sid, bp_id, ue_specs, window, request=None):
        bp = self.sc.blueprints[bp_id]
        inst = instantiate(sid, bp, (window, request.end_window if request else self.sc.duration_windows))
        inst = transition(transition(inst, "admit"), "activate")
        self.lifecycle.append((window, sid, inst.state.value))
        sl = _Slice(sid, bp, self.sc.slice_policies[bp_id], self.sc.numerologies[bp.numerology].symbols_per_cell,
                    inst, request)
        self.slices[sid] = sl
        self.latencies[sid] = []
        self.lat_violations[sid] = 0
        self.served_by_slice.setdefault(sid, 0.0)
        for ue_id, pos, speed, fspec in ue_specs:
            ue = Ue(ue_id, sid, tuple(float(v) for v in pos), float(speed))
            cfg = self.sc.mc_configs.get(ue_id)
            if cfg is None:
                ue.serving = self.topology.nearest(ue.position, 1)
            elif cfg.mode == "duplicate":
                ue.serving = [cfg.anchor_node]
            else:
                ue.serving = list(cfg.legs)
            self.ues[ue_id] = ue
            sl.ues.append(ue_id)
            model, gate = flow_model(fspec)
            if model is not None:
                self.flows.setdefault(sid, []).append(
                    Flow(f"{ue_id}.f0", ue_id, model, self.sc.full_buffer_bits, gate))
            if self.sc.uca.enabled:
                self.ucas[ue_id] = form_uca(ue, self.topology, self.sc.uca.k)

    def _remove_slice(self, sid, window):
        sl = self.slices.pop(sid)
        self.lifecycle.append((window, sid, transition(sl.instance, "terminate").state.value))
        for ue_id in sl.ues:
            self.ues.pop(ue_id, None)
            self.ucas.pop(ue_id, None)
        self.flows.pop(sid, None)

    def _template_ues(self, req):
        tpl = self.sc.ue_templates[req.blueprint_id]
        (x0, y0), (x1, y1) = self.sc.area
        rng = self.rng["placement"]
        out = []
        for i in range(int(tpl.get("count", 1))):
            pos = (float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
            out.append((f"{req.id}.u{i}", pos, tpl.get("speed_mps", 0.0), tpl.get("flow", {"model": "full_buffer"})))
        return out

    # --- helpers ------------------------------------------------------------

    def _all_flows(self):
        return [f for sid in sorted(self.flows) for f in self.flows[sid]]

    def _best_se(self, channel, sid) -> np.ndarray:
        sl = self.slices[sid]
        row = np.zeros(self.grid.n_rb)
        for ue_id in sl.ues:
            for node in self.serving[ue_id]:
                row = np.maximum(row, channel.se_row(ue_id, node))
        return np.tile(row, self.grid.slots_per_window)

    def _floors(self, obj, ids):
        floors = {s: int(obj.floors.get(s, 0)) for s in ids}
        for s in ids:
            req = self.slices[s].request
            if req is not None:
                floors[s] = max(floors[s], req.demand_cells_per_window)
        if sum(floors.values()) > self.grid.n_cells:
            # only reachable without a load cap; scale down in proportion
            floors = largest_remainder(self.grid.n_cells, {s: f for s, f in floors.items() if f > 0}) | {
                s: 0 for s, f in floors.items() if f == 0}
        return floors

    def _violation(self, detail, name, w):
        raise InvariantViolation(name, detail, w)

    # --- main loop --------------------------------------------------------------

    def run(self) -> MetricsReport:
        for w in range(self.sc.duration_windows):
            self._window(w)
        self._finish()
        return self.report

    def _window(self, w):
        sc, grid, rows = self.sc, self.grid, self.report.rows
        t0 = w * self.window_ms
        slot_ms = grid.slot_ms

        # 1. arrivals
        for f in self._all_flows():
            f.release_pending(t0)
            f.refill()
        flows_by_id = {f.id: f for f in self._all_flows()}
        slice_of_flow = {f.id: sid for sid, fl in self.flows.items() for f in fl}
        for a in generate_traffic(self._all_flows(), t0, self.window_ms, self.rng["traffic"]):
            sid = slice_of_flow[a.flow_id]
            budget = self.slices[sid].blueprint.sla.latency_budget_ms
            flows_by_id[a.flow_id].enqueue(a, t0, budget)

        # 2. admission
        if self.admission is not None:
            for req in sorted(self.admission.expire(w), key=lambda r: r.id):
                self._remove_slice(req.id, w)
            for req in sorted(self.requests.get(w, ()), key=lambda r: r.id):
                d = self.admission.offer(req)
                rows["decisions"].append((w, req.id, req.class_id, req.tenant_id, req.demand_cells_per_window,
                                          d.accept, d.reason))
                if d.accept:
                    self._add_slice(req.id, req.blueprint_id, self._template_ues(req), w, req)
                    budget = self.slices[req.id].blueprint.sla.latency_budget_ms
                    for f in self.flows.get(req.id, []):
                        f.refill()
                        for a in generate_traffic([f], t0, self.window_ms, self.rng["traffic"]):
                            f.enqueue(a, t0, budget)
                else:
                    self.lifecycle.append((w, req.id, "Terminated"))
            if self.admission.policy.caps_load and self.admission.committed_cells > grid.n_cells:
                self._violation(f"{self.admission.committed_cells} committed cells on a {grid.n_cells}-cell grid",
                                "load cap", w)
        flows_by_id = {f.id: f for f in self._all_flows()}
        backlog_start = {fid: f.backlog_bits for fid, f in flows_by_id.items()}

        # 3. channel
        ue_list = [self.ues[u] for u in sorted(self.ues)]
        channel = step_channel(ue_list, self.topology, grid.n_rb, self.rng["channel"], sc.channel)
        self.serving = {u.id: list(u.serving) for u in ue_list}

        # 4. masks
        ids = sorted(self.slices)
        demand_bits = {sid: sum(f.backlog_bits for f in self.flows.get(sid, [])) for sid in ids}
        demands = [SliceDemand(sid, demand_bits[sid], self.slices[sid].blueprint.sla.priority_weight,
                               self.slices[sid].blueprint.numerology) for sid in ids]
        best_se = {sid: self._best_se(channel, sid) for sid in ids}
        policy = sc.sdmx
        if isinstance(policy.objective, FairnessWithFloor):
            policy = replace(policy, objective=replace(policy.objective, floors=self._floors(policy.objective, ids)))
        live_res = tuple(r for r in policy.reservations if r.slice_id in self.slices)
        policy = replace(policy, reservations=live_res)
        try:
            masks = compute_masks(grid, demands, best_se, policy, w, sc.tiling)
        except (ReservationError, FloorError) as exc:
            self._violation(str(exc), "oversubscribed reservation", w)
        reserved = {sid: 0 for sid in ids}
        for r in live_res:
            if r.active(w):
                reserved[r.slice_id] += len(r.cells)

        pipelines = {sid: apply_option(self.slices[sid].blueprint.ran_option) for sid in ids}
        opt2 = [sid for sid in ids if pipelines[sid].prescheduling]
        preschedules = {}
        if opt2:
            pool_cells = frozenset().union(*(masks[s].cells for s in opt2))
            pool = ResourceMask("option2-pool", pool_cells, w)
            pool_rb = [rb for (_, rb) in sorted(pool_cells)]
            for sid in opt2:
                sl = self.slices[sid]
                mean_rate = {}
                for f in self.flows.get(sid, []):
                    if pool_rb:
                        best = np.zeros(len(pool_rb))
                        for node in self.serving[f.ue_id]:
                            best = np.maximum(best, channel.se_row(f.ue_id, node)[pool_rb])
                        mean_rate[f.id] = float(best.mean()) * sl.symbols
                preschedules[sid] = build_preschedule(sid, self.flows.get(sid, []), sl.policy, mean_rate, sl.pf,
                                                      max_cells=len(pool_cells))
            weights = {sid: self.slices[sid].blueprint.sla.priority_weight for sid in opt2}
            new_masks, demotions = common_mac_split(grid, pool, preschedules, weights, best_se, w)
            masks.update(new_masks)
            for d in demotions:
                rows["demotions"].append((w, d.slice_id, d.flow_id, d.requested, d.granted))
            self.n_demotions += len(demotions)

        # 5. scheduling, 6. reassembly and latency
        all_grants = []
        served_flow: dict[str, float] = {}
        completed: dict[str, int] = {sid: 0 for sid in ids}
        viol: dict[str, int] = {sid: 0 for sid in ids}
        for sid in ids:
            sl = self.slices[sid]
            flows = self.flows.get(sid, [])
            slice_grants = []
            for dom in self.domains:
                members = [f for f in flows if set(self.serving[f.ue_id]) & set(dom)]
                if not members or not masks[sid].cells:
                    continue
                serving = {f.ue_id: [n for n in self.serving[f.ue_id] if n in dom] for f in members}
                if pipelines[sid].prescheduling:
                    grants = schedule_prescheduled(sid, masks[sid], members, channel, preschedules[sid],
                                                   serving=serving, symbols_per_cell=sl.symbols, nodes=list(dom))
                else:
                    state = SliceSchedulerState(sl.pf.avg, sl.rr.get(dom))
                    grants = schedule_within_mask(sid, masks[sid], members, channel, sl.policy, serving=serving,
                                                  symbols_per_cell=sl.symbols, nodes=list(dom), state=state,
                                                  window_index=w, update_state=False)
                    sl.rr[dom] = state.rr_last
                by_flow = {f.id: f for f in members}
                for g in sorted(grants, key=lambda g: (g.cell, g.node)):
                    f = by_flow[g.flow_id]
                    extra = self._reassembly(g.ue_id)
                    got, done = f.serve(g.bits, t0 + (g.cell[0] + 1) * slot_ms + extra)
                    if got < g.bits - 1e-6:
                        self._violation(f"grant of {g.bits} bits to {f.id} exceeds its backlog", "backlog conservation", w)
                    served_flow[f.id] = served_flow.get(f.id, 0.0) + got
                    if g.ue_id in sc.mc_configs:
                        legs = self.mc_leg_bits.setdefault(g.ue_id, {})
                        legs[g.node] = legs.get(g.node, 0.0) + got
                    for p in done:
                        completed[sid] += 1
                        self.latencies[sid].append(p.latency_ms)
                        if p.completed_ms > p.deadline_ms + 1e-9 and not p.violated:
                            p.violated = True
                            viol[sid] += 1
                slice_grants.extend(grants)
            if sl.policy.discipline == "pf":
                update_pf_average(sl.pf, sl.policy, flows, slice_grants)
            all_grants.extend(slice_grants)

        # packets still queued past their deadline count once, when the window closes
        t1 = t0 + self.window_ms
        for sid in ids:
            for f in self.flows.get(sid, []):
                for p in list(f.queue) + f.pending:
                    if not p.violated and p.deadline_ms < t1 - 1e-9:
                        p.violated = True
                        viol[sid] += 1

        # invariants
        try:
            check_isolation(grid, masks, all_grants)
        except AssertionError as exc:
            self._violation(str(exc), "isolation", w)
        if sc.tiling is not None:
            for sid in ids:
                ok = sc.tiling.numerology_cells(self.slices[sid].blueprint.numerology)
                for cell in masks[sid].cells:
                    if not ok[grid.flat(cell)]:
                        self._violation(f"{sid} got cell {cell} of a foreign numerology tile", "mask containment", w)
        for fid, f in flows_by_id.items():
            expect = backlog_start[fid] - served_flow.get(fid, 0.0)
            now = f.backlog_bits
            if now < 0 or abs(now - expect) > 1e-6 * max(1.0, backlog_start[fid]):
                self._violation(f"flow {fid}: start {backlog_start[fid]} served {served_flow.get(fid, 0.0)} "
                                f"left {now}", "backlog conservation", w)
        # per-slice rows and SLA outcomes
        n_grants = {sid: 0 for sid in ids}
        used_cells = {sid: set() for sid in ids}
        for g in all_grants:
            n_grants[g.slice_id] += 1
            used_cells[g.slice_id].add(g.cell)
        violated_requests = []
        win_s = self.window_ms / 1000.0
        for sid in ids:
            sl = self.slices[sid]
            served = sum(served_flow.get(f.id, 0.0) for f in self.flows.get(sid, []))
            start = sum(backlog_start[f.id] for f in self.flows.get(sid, []))
            need = min(sl.blueprint.sla.min_throughput_bps * win_s, start)
            thr_viol = need > 0 and served < need - 1e-9
            if sl.request is not None and start > 0 and len(masks[sid]) < sl.request.demand_cells_per_window:
                thr_viol = True
            if thr_viol and sl.request is not None:
                violated_requests.append(sl.request.id)
            self.served_by_slice[sid] += served
            self.lat_violations[sid] += viol[sid]
            end = sum(f.backlog_bits for f in self.flows.get(sid, []))
            rows["slices"].append((w, sid, start, len(masks[sid]), n_grants[sid], served, end, completed[sid],
                                   viol[sid], thr_viol))
            rows["masks"].append((w, sid, len(masks[sid]), reserved[sid], len(used_cells[sid])))

        # 7. mobility and UCA
        moved, events = move_ues(ue_list, self.window_ms, self.rng["mobility"], self.topology, sc.area)
        for ue in moved:
            if ue.id not in sc.mc_configs:
                ue.serving = self.topology.nearest(ue.position, 1)
            self.ues[ue.id] = ue
        for ev in events:
            ue = self.ues[ev.ue_id]
            base = baseline_handover(ue, ev, sc.uca.costs)
            self.base_totals.add(base)
            if sc.uca.enabled:
                uca, delta = on_cell_change(self.ucas[ue.id], ue, ev.new_node, self.topology, sc.uca.k, sc.uca.costs)
                if uca.anchor not in uca.nodes:
                    self._violation(f"UCA of {ue.id} anchored outside its node set", "anchor membership", w)
                self.ucas[ue.id] = uca
                self.uca_totals.add(delta)
                kind = "intra_uca" if "intra_uca" in delta.by_event else "inter_uca"
            else:
                delta, kind = SignalingCounters(), "handover"
            rows["signaling"].append((w, ev.ue_id, ev.old_node, ev.new_node, kind, delta.ran_messages,
                                      delta.cn_messages, base.ran_messages, base.cn_messages))

        # 8. settlement
        if self.admission is not None:
            adm = self.admission
            settle_window(adm.ledger, adm.active, violated_requests)
            adm.ledger.utilization.append(float(adm.load))
            rows["ledger"].append((w, adm.committed_cells, float(adm.load), len(adm.active),
                                   adm.ledger.total_revenue, adm.ledger.total_penalties))

    def _reassembly(self, ue_id) -> float:
        cfg = self.sc.mc_configs.get(ue_id)
        if cfg is None or cfg.mode == "duplicate":
            return 0.0
        return reassembly_latency_ms(cfg, self.topology)

    def _finish(self):
        rows, t = self.report.rows, self.report.totals
        for sid in sorted(self.latencies):
            lat = self.latencies[sid]
            rows["latency"].append((sid, len(lat), percentile(lat, 50), percentile(lat, 95), percentile(lat, 99),
                                    max(lat) if lat else math.nan, self.lat_violations[sid]))
        slice_rows = rows["slices"]
        t["served_bits"] = float(sum(r[5] for r in slice_rows))
        t["served_bits_by_slice"] = dict(sorted(self.served_by_slice.items()))
        t["throughput_violations"] = int(sum(r[9] for r in slice_rows))
        t["latency_violations"] = int(sum(self.lat_violations.values()))
        t["demotions"] = self.n_demotions
        ledger = self.admission.ledger.to_dict() if self.admission is not None else {
            "revenue": {}, "penalties": {}, "accepted": {}, "rejected": {},
            "total_revenue": 0.0, "total_penalties": 0.0, "net_revenue": 0.0}
        t["ledger"] = ledger
        t["signaling"] = {"uca": self.uca_totals.to_dict(), "baseline": self.base_totals.to_dict()}
        mc = {}
        for ue_id, cfg in sorted(self.sc.mc_configs.items()):
            entry = {"anchor": cfg.anchor, "mode": cfg.mode, "legs": list(cfg.legs),
                     "leg_bits": dict(sorted(self.mc_leg_bits.get(ue_id, {}).items()))}
            entry["delivered_bits"] = float(sum(entry["leg_bits"].values()))
            if cfg.mode == "duplicate" and ue_id in self.sc.leg_per:
                entry["effective_per"] = duplicate_reliability(self.sc.leg_per[ue_id])
            mc[ue_id] = entry
        t["multiconn"] = mc
        t["lifecycle"] = [list(x) for x in self.lifecycle]


def run(scenario: Scenario, seed: Optional[int] = None, trace=None, admission=None) -> MetricsReport:
    """Run ``scenario`` once; the report is a pure function of (scenario, seed)."""
    return Engine(scenario, seed, trace, admission).run()
