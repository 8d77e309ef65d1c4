import json
import subprocess
import sys

import pytest
import yaml
from click.testing import CliRunner

import netslice.runner.engine as engine_mod
from netslice.runner.cli import main
from netslice.runner.scenario import shipped


@pytest.fixture
def cli():
    return CliRunner()


def test_validate_ok(cli):
    res = cli.invoke(main, ["validate", str(shipped("minimal"))])
    assert res.exit_code == 0 and res.output.startswith("ok minimal config_hash=")


def test_validate_failure_exit_2(cli, tmp_path):
    doc = yaml.safe_load(shipped("minimal").read_text())
    doc["slices"][0]["blueprint"] = "ghost"
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(doc))
    res = cli.invoke(main, ["validate", str(p)])
    assert res.exit_code == 2 and "ghost" in res.output


def test_missing_file_exit_4(cli, tmp_path):
    assert cli.invoke(main, ["validate", str(tmp_path / "none.yaml")]).exit_code == 4


def test_unwritable_output_exit_4(cli, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    res = cli.invoke(main, ["run", str(shipped("minimal")), "--out", str(blocker / "sub")])
    assert res.exit_code == 4


def test_invariant_violation_exit_3(cli, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise engine_mod.InvariantViolation("isolation", "forced", 0)

    monkeypatch.setattr(engine_mod, "check_isolation", boom)
    res = cli.invoke(main, ["run", str(shipped("minimal")), "--out", str(tmp_path / "o")])
    assert res.exit_code == 3


def test_run_writes_files(cli, tmp_path):
    res = cli.invoke(main, ["run", str(shipped("minimal")), "--seed", "2", "--out", str(tmp_path)])
    assert res.exit_code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "summary.json" in names and "slices.csv" in names
    meta = json.loads((tmp_path / "summary.json").read_text())["meta"]
    assert meta["seed"] == 2


def test_replicate_and_bad_seed_spec(cli, tmp_path):
    res = cli.invoke(main, ["replicate", str(shipped("minimal")), "--seeds", "1..3", "--out", str(tmp_path)])
    assert res.exit_code == 0 and res.output.startswith("metric,n,mean")
    res = cli.invoke(main, ["replicate", str(shipped("minimal")), "--seeds", "5..1", "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_sweep_thresholds(cli, tmp_path):
    res = cli.invoke(main, ["sweep-thresholds", str(shipped("scarcity")), "--grid", "0,0.5,1;0:1:0.5",
                            "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    best = json.loads((tmp_path / "best.json").read_text())
    assert best["net_revenue"] <= best["offline_bound"]
    assert len((tmp_path / "sweep.csv").read_text().splitlines()) == 10
    res = cli.invoke(main, ["sweep-thresholds", str(shipped("minimal")), "--grid", "0,1", "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_compare_output_stable_across_processes():
    cmd = [sys.executable, "-m", "netslice.runner.cli", "compare", str(shipped("multiplexing")),
           "--policies", "static_split,weighted_fair", "--seeds", "1..3"]
    a = subprocess.run(cmd, capture_output=True, text=True, check=True)
    b = subprocess.run(cmd, capture_output=True, text=True, check=True)
    assert a.stdout == b.stdout
    assert a.stdout.splitlines()[0] == "seed,static_split,weighted_fair,diff"
    bad = subprocess.run(cmd[:-4] + ["--policies", "nope,weighted_fair", "--seeds", "1"], capture_output=True)
    assert bad.returncode == 2
