"""End-to-end acceptance criteria, one test each.

Every test records a PASS/FAIL line with its runtime; the lines are printed
together at the end of the pytest session (see ``conftest.py``).
"""

import math
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

import netslice.runner.engine as engine_mod
from helpers import fb_flows, se_channel
from netslice.broker import generate_trace, offline_optimal
from netslice.grid import ResourceMask, build_grid
from netslice.multiconn import duplicate_reliability, duplicate_reliability_mc
from netslice.radio import Node, Topology, Ue
from netslice.runner import load_scenario, run
from netslice.runner.scenario import SHIPPED, build_scenario, shipped
from netslice.runner.sweep import compare, policy_scenario, sweep_thresholds
from netslice.scheduling import (MaxSpectralEfficiency, SdmxPolicy, SliceDemand, SlicePolicy, SliceSchedulerState,
                                 StaticSplit, WeightedFair, compute_masks, schedule_within_mask)
from netslice.uca import SignalingCosts, SignalingCounters, baseline_handover, form_uca, on_cell_change
from oracles import maxse_bruteforce, offline_enumerate, pf_reference

pytestmark = pytest.mark.acceptance

RESULTS = []


@contextmanager
def criterion(number, name, limit_s=None):
    t = time.perf_counter()
    ok, detail = False, ""
    info = {}
    try:
        yield info
        ok = True
    except BaseException as exc:
        detail = f": {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    finally:
        dt = time.perf_counter() - t
        if ok and limit_s is not None and dt > limit_s:
            ok, detail = False, f": took {dt:.1f} s, limit {limit_s} s"
        extra = f" [{info['note']}]" if info.get("note") else ""
        RESULTS.append(f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({dt:.1f} s){extra}{detail}")
        if not ok and limit_s is not None and dt > limit_s:
            pytest.fail(detail)


def sc(name):
    return load_scenario(shipped(name))


# 1 -----------------------------------------------------------------------------

def independent_isolation_check(grid, masks, grants):
    owner = {}
    for sid, m in masks.items():
        for cell in m.cells:
            assert 0 <= cell[0] < grid.slots_per_window and 0 <= cell[1] < grid.n_rb, (sid, cell)
            assert cell not in owner, f"cell {cell} in masks of {owner.get(cell)} and {sid}"
            owner[cell] = sid
    for g in grants:
        assert owner.get(g.cell) == g.slice_id, f"{g.slice_id} used {g.cell} owned by {owner.get(g.cell)}"


def test_criterion_1_isolation(monkeypatch):
    with criterion(1, "isolation", limit_s=60) as info:
        windows = 0
        real = engine_mod.check_isolation

        def recorder(grid, masks, grants):
            nonlocal windows
            independent_isolation_check(grid, masks, grants)
            windows += 1
            return real(grid, masks, grants)

        monkeypatch.setattr(engine_mod, "check_isolation", recorder)
        rng = np.random.default_rng(99)
        objectives = ["static_split", "weighted_fair", "max_se", "fairness_with_floor"]
        for name in ("multiplexing", "options", "deterministic", "scarcity"):
            for obj in objectives:
                base = policy_scenario(sc(name), obj)
                raw = dict(base.raw, duration_windows=min(base.duration_windows, 60))
                run(build_scenario(raw), seed=int(rng.integers(1 << 30)))
        engine_windows = windows

        # plus directly drawn windows with random demands, channels and objectives
        policies = ["static", "wf", "maxse"]
        for _ in range(600):
            n_rb, slots = int(rng.integers(1, 8)), int(rng.integers(1, 4))
            grid = build_grid(n_rb, slots)
            n_s = int(rng.integers(1, 5))
            ids = [f"s{i}" for i in range(n_s)]
            ues = {s: [f"{s}u{j}" for j in range(int(rng.integers(1, 4)))] for s in ids}
            all_ues = [u for s in ids for u in ues[s]]
            se = rng.choice([0.0, 0.5, 1.0, 2.5, 6.0], size=(len(all_ues), n_rb))
            ch = se_channel(all_ues, se)
            backlog = {u: float(rng.choice([0.0, 100.0, 1e9])) for u in all_ues}
            demand = [SliceDemand(s, sum(backlog[u] for u in ues[s]), float(rng.uniform(0.5, 3))) for s in ids]
            best = {s: np.tile(se[[all_ues.index(u) for u in ues[s]]].max(axis=0), slots) for s in ids}
            kind = policies[int(rng.integers(3))]
            obj = {"static": StaticSplit({s: float(rng.uniform(0.5, 3)) for s in ids}),
                   "wf": WeightedFair(), "maxse": MaxSpectralEfficiency()}[kind]
            masks = compute_masks(grid, demand, best, SdmxPolicy(obj), 0)
            grants = []
            for s in ids:
                flows = [f for u in ues[s] for f in fb_flows([u], backlog[u]) if backlog[u] > 0]
                if not flows:
                    continue
                disc = ["rr", "pf", "edf"][int(rng.integers(2))]
                grants += schedule_within_mask(s, masks[s], flows, ch, SlicePolicy(disc),
                                               serving={u: ["n0"] for u in ues[s]}, symbols_per_cell=168)
            independent_isolation_check(grid, masks, grants)
            windows += 1
        info["note"] = f"{windows} windows, {engine_windows} through the engine"
        assert windows >= 1000


# 2 -----------------------------------------------------------------------------

def test_criterion_2_scheduler_oracles():
    with criterion(2, "scheduler oracles", limit_s=120) as info:
        rng = np.random.default_rng(2)
        maxse_n = pf_n = 0
        for _ in range(100):
            # MaxSE coordinator against exhaustive enumeration
            n_s = int(rng.integers(1, 5))
            n_c = int(rng.integers(1, 13))
            while n_s ** n_c > 4 ** 10:  # keep the enumeration within memory
                n_c -= 1
            n_rb = n_c
            grid = build_grid(n_rb, 1)
            ids = [f"s{i}" for i in range(n_s)]
            se = rng.choice([0.0, 0.5, 1.0, 1.5, 3.0], size=(n_s, n_c))
            active = rng.random(n_s) < 0.8
            demand = [SliceDemand(s, 1e6 if active[i] else 0.0, 1.0) for i, s in enumerate(ids)]
            masks = compute_masks(grid, demand, {s: se[i] for i, s in enumerate(ids)},
                                  SdmxPolicy(MaxSpectralEfficiency()), 0)
            got = np.full(n_c, -1)
            for i, s in enumerate(ids):
                for (_, rb) in masks[s].cells:
                    got[rb] = i
            eligible = np.repeat(active[:, None], n_c, axis=1)
            want = maxse_bruteforce(se, eligible) if active.any() else np.full(n_c, -1)
            assert list(got) == list(want), (se, active)
            maxse_n += 1

            # PF inside a random mask against the reference PF
            n_ue = int(rng.integers(1, 5))
            slots = int(rng.integers(1, 3))
            n_rb = int(rng.integers(1, 13 // slots + 1))
            grid = build_grid(n_rb, slots)
            cells = sorted(c for c in grid.cells() if rng.random() < 0.7) or [(0, 0)]
            ues = [f"u{j}" for j in range(n_ue)]
            table = rng.integers(0, 8, size=(n_ue, n_rb)) * 0.5
            ch = se_channel(ues, table)
            windows = int(rng.integers(1, 6))
            backlogs = [[float(rng.choice([0.0, 300.0, 1000.0, 1e9])) for _ in ues] for _ in range(windows)]
            state, got = SliceSchedulerState(), []
            for w in range(windows):
                flows = [fb_flows([u], b)[0] for u, b in zip(ues, backlogs[w])]
                grants = schedule_within_mask("s", ResourceMask("s", frozenset(cells), w), flows, ch,
                                              SlicePolicy("pf", horizon=5.0), serving={u: ["n0"] for u in ues},
                                              symbols_per_cell=100, state=state)
                by_cell = {g.cell: (ues.index(g.ue_id), g.bits) for g in grants}
                got.append([by_cell.get(c, (-1, 0.0)) for c in cells])
            rates = [[[table[u][c[1]] * 100 for c in cells] for u in range(n_ue)]] * windows
            want = pf_reference(rates, backlogs, 5.0, windows)
            assert got == [[(o, float(b)) for o, b in row] for row in want]
            pf_n += 1
        info["note"] = f"{maxse_n} MaxSE + {pf_n} PF instances"


# 3 -----------------------------------------------------------------------------

def test_criterion_3_multiplexing_gain():
    with criterion(3, "multiplexing gain") as info:
        cmp = compare(sc("multiplexing"), ["static_split", "weighted_fair"], list(range(1, 21)), "served_bits")
        wins, losses, ties, p = cmp.sign_test()
        mean = sum(cmp.diffs) / len(cmp.diffs)
        info["note"] = f"wins {wins}/20, mean gain {mean:.0f} bits, sign test p={p:.2g}"
        assert all(d >= 0 for d in cmp.diffs)
        assert mean > 0 and p < 0.05


# 4 -----------------------------------------------------------------------------

def test_criterion_4_broker():
    with criterion(4, "broker bound and improvement", limit_s=300) as info:
        s = sc("scarcity")
        grid = s.broker.threshold_grid
        better = 0
        for seed in range(1, 21):
            out = sweep_thresholds(s, grid, seed=seed)
            assert out.offline_bound is not None
            assert out.best.revenue <= out.offline_bound + 1e-9, seed
            better += out.best.net > out.always_accept_net
        rng = np.random.default_rng(4)
        checked = 0
        for _ in range(30):
            trace = generate_trace(s.broker.classes, 6, rng, s.grid.n_cells)[:10]
            if len(trace) < 10:
                continue
            assert offline_optimal(trace, s.grid.n_cells) == offline_enumerate(trace, s.grid.n_cells)
            checked += 1
        info["note"] = f"threshold beats always-accept on {better}/20 seeds, {checked} enumeration checks"
        assert checked >= 10
        assert better >= 18


# 5 -----------------------------------------------------------------------------

def test_criterion_5_duplication():
    with criterion(5, "duplication reliability", limit_s=60) as info:
        p = duplicate_reliability([1e-2, 1e-2])
        assert p == pytest.approx(1e-4, rel=1e-12)
        n = 10_000_000
        lost, rate = duplicate_reliability_mc([1e-2, 1e-2], n, np.random.default_rng(5))
        sigma = math.sqrt(n * p * (1 - p))
        info["note"] = f"MC {lost} lost of {n} vs {n * p:.0f} +- {3 * sigma:.0f}"
        assert abs(lost - n * p) <= 3 * sigma


# 6 -----------------------------------------------------------------------------

def test_criterion_6_uca():
    with criterion(6, "UCA signaling") as info:
        s = sc("uca_grid")
        assert len(s.topology.nodes) == 9 and s.duration_windows == 10_000
        notes = []
        for seed in range(1, 4):
            t = run(s, seed=seed).totals["signaling"]
            u, b = t["uca"]["cn_messages"], t["baseline"]["cn_messages"]
            notes.append(f"{u}<{b}")
            assert u < b, seed
        # constructed trajectory that only ever crosses into nodes of its first UCA
        topo = Topology(tuple(Node(f"n{i}{j}", (100.0 * i, 100.0 * j)) for i in range(3) for j in range(3)))
        ue = Ue("w", "s", (10.0, 10.0))
        uca = form_uca(ue, topo, 4)
        assert set(uca.nodes) == {"n00", "n01", "n10", "n11"}
        path = [(90.0, 10.0), (60.0, 20.0), (60.0, 90.0), (10.0, 60.0), (20.0, 20.0), (95.0, 95.0), (40.0, 10.0)]
        serving, total, base, changes = "n00", SignalingCounters(), SignalingCounters(), 0
        for p in path:
            ue.position = p
            new = topo.nearest(p)[0]
            if new != serving:
                uca, d = on_cell_change(uca, ue, new, topo, 4, SignalingCosts())
                total.add(d)
                base.add(baseline_handover(ue, new))
                serving, changes = new, changes + 1
        assert changes >= 5
        assert total.cn_messages == 0 and base.cn_messages > 0
        info["note"] = f"cn uca<baseline per seed {', '.join(notes)}; constructed path {changes} changes, 0 CN"


# 7 -----------------------------------------------------------------------------

def test_criterion_7_deterministic_sla():
    with criterion(7, "deterministic-traffic SLA") as info:
        s = sc("deterministic")
        with_res = run(s).totals["latency_violations"]
        raw = dict(s.raw, sdmx={k: v for k, v in s.raw["sdmx"].items() if k != "reservations"})
        without = run(build_scenario(raw)).totals["latency_violations"]
        info["note"] = f"{with_res} violations with the reservation, {without} without"
        assert with_res == 0 and without >= 1


# 8 -----------------------------------------------------------------------------

def test_criterion_8_determinism():
    with criterion(8, "determinism") as info:
        for name in SHIPPED:
            assert run(sc(name)).digest() == run(sc(name)).digest(), name
        cmd = [sys.executable, "-m", "netslice.runner.cli", "compare", str(shipped("multiplexing")),
               "--policies", "static_split,weighted_fair", "--seeds", "1..4"]
        a = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
        b = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
        assert a == b and a
        info["note"] = f"{len(SHIPPED)} scenarios, compare stable across processes"


# 9 -----------------------------------------------------------------------------

def test_criterion_9_closed_form():
    with criterion(9, "closed-form throughput") as info:
        s = sc("closed_form")
        num = s.numerologies[0]
        per_window = s.grid.n_rb * s.grid.slots_per_window * s.channel.constant_se * num.symbols_per_cell
        rep = run(s)
        assert [r[5] for r in rep.rows["slices"]] == [per_window] * s.duration_windows
        assert rep.totals["served_bits"] == per_window * s.duration_windows
        info["note"] = f"{per_window:.0f} bits/window"
