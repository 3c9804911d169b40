import csv
import io
import json

import pytest

from hybrid_fms.fms import FmsConfig
from hybrid_fms.harness import emit
from hybrid_fms.harness.baseline import conventional_baseline
from hybrid_fms.harness.cli import main
from hybrid_fms.harness.kpi import (
    IncompleteTrace,
    InsufficientRuns,
    busy_intervals,
    compute_kpis,
    compute_repeatability,
    overlapping,
)
from hybrid_fms.harness.scenario import ScenarioConfig, from_echo, run_agents, run_scenario
from hybrid_fms.petri.net import SimEvent


def test_repeatability_is_population_std():
    assert compute_repeatability([{"cnc": 50.0}, {"cnc": 60.0}]) == pytest.approx(5.0)
    # mean over resources of the per-resource deviation
    assert compute_repeatability([{"cnc": 50.0, "robot": 4.0}, {"cnc": 60.0, "robot": 14.0}]) == pytest.approx(5.0)
    assert compute_repeatability([{"cnc": 1 / 3}] * 5) == 0.0
    with pytest.raises(InsufficientRuns):
        compute_repeatability([{"cnc": 1.0}])


def fire(t, tid, delay, res, order=0):
    return SimEvent(t, "fire", tid, {"binding": [{"color": {"res": res, "order": order, "part": 0}, "ts": t}],
                                     "delay": delay})


def test_kpis_from_hand_trace():
    cfg = FmsConfig(order_count=2)
    events = [
        fire(0, "cnc_start", 10_000, "cnc"),
        fire(10_000, "cnc_start", 10_000, "cnc", 1),
        fire(30_000, "unload_s3", 0, "conveyor", 0),
        fire(60_000, "unload_s3", 0, "conveyor", 1),
    ]
    k = compute_kpis(events, cfg)
    assert k.lead_times == {0: 30_000, 1: 60_000} and k.lead_time_mean == 45_000
    assert k.makespan == 60_000 and k.throughput == pytest.approx(120.0)
    assert k.utilization["cnc"] == pytest.approx(100 * 20_000 / 60_000)
    assert k.complete
    with pytest.raises(IncompleteTrace) as info:
        compute_kpis(events[:3], cfg, strict=True)
    assert info.value.missing == [1]
    assert compute_kpis(events[:3], cfg).missing == [1]
    assert overlapping([(0, 5), (5, 9), (8, 10)]) == [((5, 9), (8, 10))]


@pytest.mark.parametrize("scenario", ["A", "B"])
def test_kpi_identities_on_real_runs(scenario):
    cfg = FmsConfig(order_count=8, seed=2)
    if scenario == "B":
        cfg = cfg.with_failure(0.2)
    for events in (run_agents(cfg)[0].events, conventional_baseline(cfg).events):
        k = compute_kpis(events, cfg, strict=True)
        assert k.throughput == pytest.approx(k.orders_completed * 3_600_000 / k.makespan)
        assert max(k.lead_times.values()) == k.makespan
        assert all(0 <= u <= 100 for u in k.utilization.values())
        assert all(overlapping(iv) == [] for iv in busy_intervals(events).values())


def test_single_order_baseline_matches_agents():
    cfg = FmsConfig(order_count=1)
    assert compute_kpis(conventional_baseline(cfg).events, cfg).makespan == 69_000
    assert compute_kpis(run_agents(cfg)[0].events, cfg).makespan == 69_000


# regression values for 20 orders, seed 1
FROZEN = {
    ("A", "agent-mes"): (358_500.0, 639_000),
    ("A", "conventional"): (441_300.0, 797_000),
    ("B", "agent-mes"): (530_400.0, 1_089_000),
    ("B", "conventional"): (615_950.0, 1_245_000),
}


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_frozen_twenty_order_runs(key):
    scenario, controller = key
    sc = ScenarioConfig(scenario, FmsConfig(order_count=20), seeds=(1,), controller=controller)
    (r,) = run_scenario(sc)
    assert (r.kpis.lead_time_mean, r.kpis.makespan) == FROZEN[key]
    assert r.outcome == "complete"


@pytest.fixture(scope="module")
def grid():
    results = []
    for scenario in ("A", "B"):
        for controller in ("agent-mes", "conventional"):
            sc = ScenarioConfig(scenario, FmsConfig(order_count=4), seeds=(1, 2, 3), controller=controller)
            results += run_scenario(sc)
    return results


def test_emit_rows_and_mirror(grid):
    cols, data = emit.rows(reversed(grid))
    assert len(data) == 12
    assert [(r["scenario"], r["controller"], r["seed"]) for r in data] == sorted(
        (r["scenario"], r["controller"], r["seed"]) for r in data)
    assert {"util_cnc", "util_robot", "util_conveyor", "util_glue-assembly"} <= set(cols)
    assert all(r["repair_time_ms"] == 30_000 for r in data if r["scenario"] == "B")
    assert all(r["repair_time_ms"] is None for r in data if r["scenario"] == "A")
    parsed = list(csv.DictReader(io.StringIO(emit.to_csv(grid).decode())))
    doc = json.loads(emit.to_json(grid))
    assert doc["columns"] == cols and len(parsed) == len(doc["rows"]) == 12
    for c_row, j_row in zip(parsed, doc["rows"]):
        assert c_row == {k: "" if v is None else str(v) for k, v in j_row.items()}


def test_emit_is_order_independent(grid):
    assert emit.to_csv(grid) == emit.to_csv(list(reversed(grid)))


def test_gnuplot_table(grid):
    lines = emit.to_gnuplot(grid, "throughput_per_hour").decode().splitlines()
    assert lines[1] == "# controller A B"
    assert [ln.split()[0] for ln in lines[2:]] == ["agent-mes", "conventional"]


def test_config_echo_reproduces_run(grid):
    r = grid[0]
    sc, cfg = from_echo(r.config)
    (again,) = run_scenario(ScenarioConfig(sc.scenario, cfg, seeds=(cfg.seed,), controller=sc.controller))
    assert again.kpis == r.kpis


def test_cli_run_compare_replay(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", "--scenario", "B", "--orders", "3", "--runs", "2", "--out", str(out), "--trace",
                 "--check"]) == 0
    assert main(["run", "--scenario", "B", "--controller", "conventional", "--orders", "3", "--runs", "2",
                 "--out", str(out)]) == 0
    assert main(["compare", "--in", str(out)]) == 0
    rows = emit.read_json(out / "comparison.json")
    assert len(rows) == 4 and (out / "throughput.dat").exists()
    traces = sorted(out.glob("trace-*.jsonl"))
    assert len(traces) == 2
    assert main(["replay", str(traces[0])]) == 0
    model = tmp_path / "fms.xml"
    assert main(["export-model", str(model), "--orders", "2", "--scenario", "B"]) == 0
    assert main(["validate-model", str(model)]) == 0
    capsys.readouterr()
    assert main(["compare", "--in", str(tmp_path)]) == 2


def test_cli_print_config(capsys):
    assert main(["run", "--controller", "agents", "--orders", "5", "--print-config"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    assert cfg["controller"] == "agent-mes"
