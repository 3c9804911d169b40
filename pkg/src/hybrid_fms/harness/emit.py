"""CSV / JSON / gnuplot output for scenario results."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable

from .kpi import InsufficientRuns, compute_repeatability
from .scenario import RunResult

BASE_COLUMNS = ("scenario", "controller", "seed", "lead_time_mean_ms", "throughput_per_hour", "repeatability")
TAIL_COLUMNS = ("makespan", "repair_time_ms", "orders_completed")
DIGITS = 6


def _group_key(r: RunResult) -> tuple[str, str]:
    return (r.config["scenario"], r.config["controller"])


def repeatability_by_group(results: Iterable[RunResult]) -> dict[tuple[str, str], float | None]:
    groups: dict[tuple[str, str], list] = defaultdict(list)
    for r in results:
        groups[_group_key(r)].append(r.kpis.utilization)
    out = {}
    for k, utils in groups.items():
        try:
            out[k] = compute_repeatability(utils)
        except InsufficientRuns:
            out[k] = None
    return out


def rows(results: Iterable[RunResult]) -> tuple[list[str], list[dict]]:
    """Columns and rows, sorted by (scenario, controller, seed) so the
    output does not depend on the order runs finished in."""
    results = sorted(results, key=lambda r: (*_group_key(r), r.config["seed"]))
    rep = repeatability_by_group(results)
    resources = sorted({res for r in results for res in r.kpis.utilization})
    cols = [*BASE_COLUMNS, *(f"util_{res}" for res in resources), *TAIL_COLUMNS]
    out = []
    for r in results:
        k = r.kpis
        rp = rep[_group_key(r)]
        row = {
            "scenario": r.config["scenario"],
            "controller": r.config["controller"],
            "seed": r.config["seed"],
            "lead_time_mean_ms": round(k.lead_time_mean, DIGITS),
            "throughput_per_hour": round(k.throughput, DIGITS),
            "repeatability": None if rp is None else round(rp, DIGITS),
            **{f"util_{res}": round(k.utilization.get(res, 0.0), DIGITS) for res in resources},
            "makespan": k.makespan,
            "repair_time_ms": r.config["repair_time"],
            "orders_completed": k.orders_completed,
        }
        out.append(row)
    return cols, out


def to_csv(results: Iterable[RunResult]) -> bytes:
    cols, data = rows(results)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in data:
        w.writerow({k: "" if v is None else v for k, v in row.items()})
    return buf.getvalue().encode()


def to_json(results: Iterable[RunResult]) -> bytes:
    cols, data = rows(results)
    doc = {"columns": cols, "rows": data, "repeatability": "population standard deviation, percentage points"}
    return (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode()


def to_gnuplot(results: Iterable[RunResult], metric: str) -> bytes:
    """Bar-chart table: one line per controller, one column per scenario,
    each cell the mean of ``metric`` over seeds."""
    _, data = rows(results)
    cells: dict[tuple[str, str], list[float]] = defaultdict(list)
    for row in data:
        cells[(row["controller"], row["scenario"])].append(row[metric])
    scenarios = sorted({s for _, s in cells})
    controllers = sorted({c for c, _ in cells})
    lines = [f"# {metric}: mean over seeds", "# controller " + " ".join(scenarios)]
    for c in controllers:
        vals = []
        for s in scenarios:
            v = cells.get((c, s))
            vals.append(f"{sum(v) / len(v):.{DIGITS}f}" if v else "?")
        lines.append(f"{c} " + " ".join(vals))
    return ("\n".join(lines) + "\n").encode()


def write_all(results: list[RunResult], out: Path, stem: str = "results") -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = {
        f"{stem}.csv": to_csv(results),
        f"{stem}.json": to_json(results),
        "lead_time.dat": to_gnuplot(results, "lead_time_mean_ms"),
        "throughput.dat": to_gnuplot(results, "throughput_per_hour"),
    }
    paths = []
    for name, data in files.items():
        p = out / name
        p.write_bytes(data)
        paths.append(p)
    return paths


def read_json(path: Path) -> list[dict]:
    return json.loads(path.read_text())["rows"]
