"""Threshold sweeps and paired policy comparisons."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Optional, Sequence

from scipy import stats

from ..broker import AdmissionPolicy, BrokerError, offline_optimal, optimize_thresholds, replay, threshold_grid
from .engine import Engine, run, scenario_trace
from .replicate import parse_policy, with_overrides
from .scenario import Scenario, ScenarioError, build_scenario


@dataclass
class SweepOutcome:
    trace: list
    best: object
    results: list
    offline_bound: Optional[float]
    always_accept_net: float
    evaluator: str


def _evaluator(scenario: Scenario, seed: int, kind: str):
    if kind == "fluid":
        return lambda tr, pol: replay(tr, pol, scenario.grid.n_cells)
    if kind == "engine":
        def sim(tr, pol):
            eng = Engine(scenario, seed, trace=tr, admission=pol)
            eng.run()
            return eng.admission.ledger
        return sim
    raise ValueError(f"unknown evaluator {kind!r}")


def sweep_thresholds(scenario: Scenario, values_per_class: Sequence[Sequence[float]], seed: Optional[int] = None,
                     evaluator: str = "fluid", trace=None) -> SweepOutcome:
    """Evaluate every threshold vector of the grid on one trace.

    The trace is the one a run with ``seed`` would see unless given. The
    offline bound is ``None`` when an overlap group exceeds the scenario's
    ``offline_cap``.
    """
    if scenario.broker is None:
        raise ScenarioError([("broker", "scenario has no broker section")])
    seed = scenario.seed if seed is None else seed
    if trace is None:
        trace = scenario_trace(scenario, seed=seed)
    sim = _evaluator(scenario, seed, evaluator)
    best, results = optimize_thresholds(trace, threshold_grid(values_per_class), sim=sim)
    try:
        bound = offline_optimal(trace, scenario.grid.n_cells, scenario.broker.offline_cap)
    except BrokerError:
        bound = None
    aa = sim(trace, AdmissionPolicy("always_accept"))
    return SweepOutcome(trace, best, results, bound, aa.net, evaluator)


@dataclass
class Comparison:
    metric: str
    policies: tuple
    seeds: list
    values: dict  # policy -> list of per-seed values

    @property
    def diffs(self) -> list:
        a, b = self.policies
        return [y - x for x, y in zip(self.values[a], self.values[b])]

    def sign_test(self):
        """``(wins, losses, ties, p)``: second policy against the first, two-sided."""
        d = self.diffs
        wins = sum(1 for x in d if x > 0)
        losses = sum(1 for x in d if x < 0)
        ties = len(d) - wins - losses
        n = wins + losses
        p = stats.binomtest(wins, n, 0.5).pvalue if n else 1.0
        return wins, losses, ties, float(p)

    def table(self) -> str:
        a, b = self.policies
        lines = [f"seed,{a},{b},diff"]
        for s, x, y, d in zip(self.seeds, self.values[a], self.values[b], self.diffs):
            lines.append(f"{s},{x!r},{y!r},{d!r}")
        wins, losses, ties, p = self.sign_test()
        mean = sum(self.diffs) / len(self.diffs)
        lines.append(f"# metric={self.metric} mean_diff={mean!r} wins={wins} losses={losses} ties={ties} "
                     f"sign_test_p={p!r}")
        return "\n".join(lines) + "\n"


def policy_scenario(scenario: Scenario, policy: str) -> Scenario:
    raw = with_overrides(copy.deepcopy(scenario.raw), parse_policy(policy))
    return build_scenario(raw)


def compare(scenario: Scenario, policies: Sequence[str], seeds: Sequence[int], metric: str = "served_bits") -> Comparison:
    """Paired-seed comparison of two policies on one scenario metric."""
    if len(policies) != 2:
        raise ValueError("compare takes exactly two policies")
    values = {}
    for pol in policies:
        sc = policy_scenario(scenario, pol)
        vals = []
        for seed in seeds:
            scal = run(sc, seed=seed).scalars()
            if metric not in scal:
                raise ValueError(f"unknown metric {metric!r}; known: {sorted(scal)}")
            vals.append(float(scal[metric]))
        values[pol] = vals
    return Comparison(metric, tuple(policies), list(seeds), values)
