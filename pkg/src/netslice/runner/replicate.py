"""Independent runs of one scenario over a list of seeds."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .engine import run
from .report import aggregate, aggregate_csv


def replicate(scenario, seeds: Sequence[int], out_dir=None, **run_kwargs):
    """Run every seed and aggregate the per-run scalar metrics.

    Returns ``(reports, rows)`` with ``reports`` keyed by seed and ``rows`` as
    produced by :func:`netslice.runner.report.aggregate`. A failing run is
    re-raised with the seed prefixed to its message.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed required")
    reports = {}
    for seed in seeds:
        try:
            rep = run(scenario, seed=seed, **run_kwargs)
        except Exception as exc:
            exc.args = (f"seed {seed}: {exc}",) + tuple(exc.args[1:])
            exc.seed = seed
            raise
        reports[seed] = rep
        if out_dir is not None:
            rep.write(Path(out_dir) / f"seed_{seed}")
    rows = aggregate({s: r.scalars() for s, r in reports.items()})
    if out_dir is not None:
        (Path(out_dir) / "aggregate.csv").write_text(aggregate_csv(rows))
    return reports, rows


def parse_seeds(spec: str) -> list[int]:
    """``"a..b"`` (inclusive), ``"a,b,c"`` or a single integer."""
    spec = spec.strip()
    if ".." in spec:
        a, b = spec.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty seed range {spec!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in spec.split(",") if s.strip()]


def parse_grid(spec: str) -> list[list[float]]:
    """Per-class threshold values separated by ``;``.

    Each class is either a comma list (``0,0.5,1``) or an inclusive range
    ``start:stop:step``.
    """
    out = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            a, b, step = (float(x) for x in part.split(":"))
            if step <= 0:
                raise ValueError(f"step must be positive in {part!r}")
            n = int(round((b - a) / step))
            vals = [round(a + i * step, 12) for i in range(n + 1)]
        else:
            vals = [float(x) for x in part.split(",")]
        if any(not 0 <= v <= 1 for v in vals):
            raise ValueError(f"thresholds must lie in [0, 1]: {part!r}")
        out.append(vals)
    if not out:
        raise ValueError("empty threshold grid")
    return out


def parse_policy(name: str) -> dict:
    """Scenario overrides for a policy name used by ``compare``.

    Coordinator objectives: ``static_split``, ``weighted_fair``, ``max_se``,
    ``fairness_with_floor``. Admission: ``always_accept``, ``greedy`` and
    ``threshold:t0/t1/...``.
    """
    name = name.strip()
    if name in ("static_split", "weighted_fair", "max_se", "fairness_with_floor"):
        return {"sdmx": {"objective": name}}
    if name in ("always_accept", "greedy"):
        return {"broker": {"policy": {"kind": name}}}
    if name.startswith("threshold:"):
        vals = [float(v) for v in name.split(":", 1)[1].split("/")]
        return {"broker": {"policy": {"kind": "threshold", "thresholds": vals}}}
    raise ValueError(f"unknown policy {name!r}")


def with_overrides(raw: dict, overrides: dict) -> dict:
    """Deep-merge ``overrides`` into a copy of ``raw``."""
    out = dict(raw)
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = with_overrides(out[k], v)
        else:
            out[k] = v
    return out
