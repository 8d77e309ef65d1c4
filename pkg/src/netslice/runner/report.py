"""Run metrics and their on-disk form.

Each metric family is one CSV file with a fixed column order (see
:data:`COLUMNS`); ``summary.json`` carries run metadata and totals. Floats
are written with ``repr`` so values round-trip exactly.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = {
    "slices": ("window", "slice_id", "backlog_start_bits", "mask_cells", "grants", "served_bits",
               "backlog_end_bits", "packets_completed", "latency_violations", "throughput_violation"),
    "masks": ("window", "slice_id", "mask_cells", "reserved_cells", "used_cells"),
    "ledger": ("window", "committed_cells", "utilization", "active_requests", "revenue", "penalties"),
    "decisions": ("window", "request_id", "class_id", "tenant_id", "demand_cells", "accept", "reason"),
    "demotions": ("window", "slice_id", "flow_id", "requested_cells", "granted_cells"),
    "signaling": ("window", "ue_id", "old_node", "new_node", "event", "uca_ran", "uca_cn", "baseline_ran",
                  "baseline_cn"),
    "latency": ("slice_id", "packets", "p50_ms", "p95_ms", "p99_ms", "max_ms", "violations"),
}


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 2**53:
            return str(int(v))
        return repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, np.floating):
        return _cell(float(v))
    return str(v)


def to_csv(family: str, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(COLUMNS[family]) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue()


def percentile(values, q: float) -> float:
    """Nearest-rank percentile; NaN for an empty sample."""
    if not values:
        return math.nan
    v = sorted(values)
    k = max(1, math.ceil(q / 100.0 * len(v)))
    return float(v[k - 1])


@dataclass
class MetricsReport:
    meta: dict
    rows: dict = field(default_factory=lambda: {k: [] for k in COLUMNS})
    totals: dict = field(default_factory=dict)

    def csv(self, family: str) -> str:
        return to_csv(family, self.rows[family])

    def summary(self) -> dict:
        return {"meta": self.meta, "totals": self.totals}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, default=_json_default) + "\n"

    def digest(self) -> str:
        """SHA-256 over every emitted file, in a fixed order."""
        h = hashlib.sha256()
        for family in COLUMNS:
            h.update(self.csv(family).encode())
        h.update(self.summary_json().encode())
        return h.hexdigest()

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for family in COLUMNS:
            (out / f"{family}.csv").write_text(self.csv(family))
        (out / "summary.json").write_text(self.summary_json())
        return out

    def scalars(self) -> dict:
        """Flat per-run metrics used for replication statistics and comparisons."""
        t = self.totals
        out = {
            "served_bits": t["served_bits"],
            "throughput_violations": t["throughput_violations"],
            "latency_violations": t["latency_violations"],
            "net_revenue": t["ledger"]["net_revenue"],
            "revenue": t["ledger"]["total_revenue"],
            "penalties": t["ledger"]["total_penalties"],
            "uca_cn_messages": t["signaling"]["uca"]["cn_messages"],
            "baseline_cn_messages": t["signaling"]["baseline"]["cn_messages"],
            "demotions": t["demotions"],
        }
        for sid, bits in t["served_bits_by_slice"].items():
            out[f"served_bits[{sid}]"] = bits
        return out


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def aggregate(per_seed: dict) -> list[tuple]:
    """``(metric, n, mean, stddev, min, max)`` rows from ``{seed: scalars}``.

    The standard deviation is the sample one (ddof 1), zero for one run.
    """
    names = []
    for scal in per_seed.values():
        for k in scal:
            if k not in names:
                names.append(k)
    rows = []
    for name in names:
        vals = np.array([float(s[name]) for s in per_seed.values() if name in s])
        if (vals == vals[0]).all():
            # exact for repeated values, where float summation could drift
            mean, sd = float(vals[0]), 0.0
        else:
            mean, sd = float(vals.mean()), float(vals.std(ddof=1))
        rows.append((name, int(vals.size), mean, sd, float(vals.min()), float(vals.max())))
    return rows


AGGREGATE_COLUMNS = ("metric", "n", "mean", "stddev", "min", "max")


def aggregate_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(AGGREGATE_COLUMNS) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue()
