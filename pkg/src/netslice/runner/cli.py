"""Command line: ``netslice {validate,run,replicate,sweep-thresholds,compare}``.

Exit codes: 0 success, 2 scenario validation failure, 3 invariant
violation at runtime, 4 I/O failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from ..broker import BrokerError, read_trace, write_trace
from .engine import InvariantViolation, run
from .replicate import parse_grid, parse_seeds, replicate
from .report import aggregate_csv
from .scenario import ScenarioError, load_scenario
from .sweep import compare, sweep_thresholds

EXIT_OK, EXIT_INVALID, EXIT_INVARIANT, EXIT_IO = 0, 2, 3, 4


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


def _load(path):
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        lines = "\n".join(f"  {p or '<root>'}: {m}" for p, m in exc.errors)
        _fail(EXIT_INVALID, f"{path}: invalid scenario\n{lines}")
    except OSError as exc:
        _fail(EXIT_IO, f"{path}: {exc.strerror or exc}")


def _guard(fn):
    """Map runtime failures of a command body onto the documented exit codes."""
    try:
        return fn()
    except InvariantViolation as exc:
        _fail(EXIT_INVARIANT, f"error: {exc}")
    except (ScenarioError, BrokerError, ValueError) as exc:
        _fail(EXIT_INVALID, f"error: {exc}")
    except OSError as exc:
        _fail(EXIT_IO, f"error: {exc}")


def _trace_opt(trace):
    if trace is None:
        return None
    return read_trace(trace)


@click.group()
def main():
    """Multi-tenant network slicing simulator."""


@main.command()
@click.argument("scenario")
def validate(scenario):
    """Check a scenario file against the schema and its cross-references."""
    sc = _load(scenario)
    click.echo(f"ok {sc.name} config_hash={sc.config_hash}")


@main.command("run")
@click.argument("scenario")
@click.option("--seed", type=int, default=None, help="Defaults to the scenario's seed.")
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
@click.option("--trace", type=click.Path(dir_okay=False), default=None, help="Replay a recorded request trace.")
def run_cmd(scenario, seed, out, trace):
    """Run one seed and write the metric files to OUT."""
    sc = _load(scenario)

    def body():
        rep = run(sc, seed=seed, trace=_trace_opt(trace))
        rep.write(out)
        click.echo(f"{rep.digest()}  {out}")

    _guard(body)


@main.command("replicate")
@click.argument("scenario")
@click.option("--seeds", required=True, help="Inclusive range a..b or a comma list.")
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
def replicate_cmd(scenario, seeds, out):
    """Run every seed, write per-seed reports and aggregate.csv."""
    sc = _load(scenario)

    def body():
        _, rows = replicate(sc, parse_seeds(seeds), out_dir=out)
        click.echo(aggregate_csv(rows), nl=False)

    _guard(body)


@main.command("sweep-thresholds")
@click.argument("scenario")
@click.option("--grid", "grid", required=True, help="Per-class values, ';'-separated: '0,0.5,1;0:1:0.25'.")
@click.option("--out", "out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--evaluator", type=click.Choice(["fluid", "engine"]), default="fluid", show_default=True)
@click.option("--trace", type=click.Path(dir_okay=False), default=None)
def sweep_cmd(scenario, grid, out, seed, evaluator, trace):
    """Evaluate a grid of admission thresholds on one request trace."""
    sc = _load(scenario)

    def body():
        res = sweep_thresholds(sc, parse_grid(grid), seed=seed, evaluator=evaluator, trace=_trace_opt(trace))
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_trace(outdir / "trace.jsonl", res.trace)
        k = len(res.best.thresholds)
        lines = [",".join([f"theta_{i}" for i in range(k)] + ["revenue", "penalties", "net_revenue"])]
        for r in res.results:
            lines.append(",".join([repr(t) for t in r.thresholds] + [repr(r.revenue), repr(r.penalties), repr(r.net)]))
        (outdir / "sweep.csv").write_text("\n".join(lines) + "\n")
        best = {
            "thresholds": list(res.best.thresholds),
            "net_revenue": res.best.net,
            "offline_bound": res.offline_bound,
            "always_accept_net_revenue": res.always_accept_net,
            "evaluator": res.evaluator,
            "requests": len(res.trace),
        }
        (outdir / "best.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n")
        click.echo(json.dumps(best, sort_keys=True))

    _guard(body)


@main.command("compare")
@click.argument("scenario")
@click.option("--policies", required=True, help="Two policies, e.g. static_split,weighted_fair.")
@click.option("--seeds", required=True)
@click.option("--metric", default="served_bits", show_default=True)
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="Also write the table here.")
def compare_cmd(scenario, policies, seeds, metric, out):
    """Paired-seed comparison of two policies with a sign test."""
    sc = _load(scenario)

    def body():
        cmp = compare(sc, [p.strip() for p in policies.split(",")], parse_seeds(seeds), metric)
        text = cmp.table()
        if out:
            Path(out).write_text(text)
        click.echo(text, nl=False)

    _guard(body)


if __name__ == "__main__":
    main()
