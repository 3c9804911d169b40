"""Acceptance suite. Each test prints one ``criterion N: PASS|FAIL`` line;
the lines are repeated in the pytest terminal summary.

The 1000-order runs are shared between criteria through a module cache,
so the whole file takes a few minutes on one core.
"""
import functools
import statistics
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import VERDICTS
from netgen import bounded_nets
from test_bridge import MAS, OBJS, SMA, FIXTURES, messages, others

from hybrid_fms.bridge import parse, serialize, serve_and_connect
from hybrid_fms.fms import FmsConfig, build_fms_net, initial_marking, release_orders
from hybrid_fms.harness import emit
from hybrid_fms.harness.kpi import compute_kpis, compute_repeatability, machining_attempts
from hybrid_fms.harness.scenario import DEFAULT_SEEDS, ScenarioConfig, run_agents, run_one, run_scenario
from hybrid_fms.petri import Simulator, run

ORDERS = 1000
WALL_LIMIT_S = 60.0
BOTTLENECK_PER_HOUR = 3600 / 30  # one CNC cycle of 30 s per order (3 parts x 10 s)
# 10% slack was the starting point; observed runs sit at 119.84, so 1% is enforced
THROUGHPUT_FLOOR = 0.99 * BOTTLENECK_PER_HOUR


def verdict(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)
    assert ok, line


def scenario(sc, controller, **kw):
    return ScenarioConfig(sc, FmsConfig(order_count=ORDERS), seeds=DEFAULT_SEEDS, controller=controller, **kw)


@functools.cache
def timed_agent_batch():
    t0 = time.perf_counter()
    results = run_scenario(scenario("A", "agent-mes"))
    return results, time.perf_counter() - t0


@functools.cache
def checked_agent_repeats():
    # second invocation per seed, with transcript and calendar checks on
    sc = scenario("A", "agent-mes", check=True)
    return [run_one(sc, seed) for seed in sc.seeds]


@functools.cache
def batch(sc, controller):
    if (sc, controller) == ("A", "agent-mes"):
        return timed_agent_batch()[0]
    return run_scenario(scenario(sc, controller, keep_trace=(sc == "B" and controller == "agent-mes")))


def mean_of(results, attr):
    return statistics.fmean(getattr(r.kpis, attr) for r in results)


def test_criterion_01_desk_scale_reproduction():
    results, wall = timed_agent_batch()
    complete = all(r.outcome == "complete" and r.kpis.orders_completed == ORDERS for r in results)
    first = {r.config["seed"]: emit.to_csv([r]) for r in results}
    second = {r.config["seed"]: emit.to_csv([r]) for r in checked_agent_repeats()}
    identical = first == second
    verdict(1, complete and identical and wall < WALL_LIMIT_S,
            f"{len(results)} seeds x {ORDERS} orders complete={complete} csv_identical={identical} "
            f"wall={wall:.1f}s (< {WALL_LIMIT_S:.0f}s)")


def test_criterion_02_reported_units():
    # the published numerals are not targets; what is checked is that every
    # emitted figure carries explicit units
    cols, _ = emit.rows(batch("A", "agent-mes"))
    ok = "lead_time_mean_ms" in cols and "throughput_per_hour" in cols and "repair_time_ms" in cols
    verdict(2, ok, "no numeric target; outputs carry units (ms, orders/hour), properties 3-11 substitute")


def test_criterion_03_single_order_oracle():
    cfg = FmsConfig(order_count=1)
    trace, _ = run_agents(cfg, policy="sequential")
    lead = compute_kpis(trace.events, cfg, strict=True).lead_times[0]
    verdict(3, lead == 101_000, f"sequential single order lead time {lead} ms (expected 101000)")


def test_criterion_04_bottleneck_bound():
    tps = [r.kpis.throughput for r in batch("A", "agent-mes")]
    ok = all(THROUGHPUT_FLOOR <= tp <= BOTTLENECK_PER_HOUR for tp in tps)
    verdict(4, ok, f"throughput {min(tps):.3f}..{max(tps):.3f} orders/h within "
                   f"[{THROUGHPUT_FLOOR:.1f}, {BOTTLENECK_PER_HOUR:.0f}] (required [108, 120])")


def test_criterion_05_dominance():
    parts, ok = [], True
    for sc in ("A", "B"):
        agent, conv = batch(sc, "agent-mes"), batch(sc, "conventional")
        la, lc = mean_of(agent, "lead_time_mean"), mean_of(conv, "lead_time_mean")
        ta, tc = mean_of(agent, "throughput"), mean_of(conv, "throughput")
        ok &= la <= lc and ta >= tc
        parts.append(f"{sc}: lead {la:.0f}<={lc:.0f} ms, throughput {ta:.2f}>={tc:.2f}/h")
    verdict(5, ok, "; ".join(parts))


def test_criterion_06_degradation():
    parts, ok = [], True
    for controller in ("agent-mes", "conventional"):
        a, b = batch("A", controller), batch("B", controller)
        la, lb = mean_of(a, "lead_time_mean"), mean_of(b, "lead_time_mean")
        ta, tb = mean_of(a, "throughput"), mean_of(b, "throughput")
        done = all(r.outcome == "complete" and r.kpis.orders_completed == ORDERS for r in b)
        ok &= lb > la and tb < ta and done
        parts.append(f"{controller}: lead {la:.0f}->{lb:.0f} ms, throughput {ta:.2f}->{tb:.2f}/h, "
                     f"B complete={done}")
    verdict(6, ok, "; ".join(parts))


def test_criterion_07_failure_rate():
    attempts = fails = 0
    for r in batch("B", "agent-mes"):
        a, f = machining_attempts(r.trace.events)
        attempts += a
        fails += f
    rate = fails / attempts
    verdict(7, attempts >= 3000 and 0.19 <= rate <= 0.21,
            f"{fails}/{attempts} machining starts failed = {rate:.4f} (p=0.2, seeds {list(DEFAULT_SEEDS)})")


def test_criterion_08_reachability_containment():
    nets = bounded_nets(seed=2024, count=10)
    visited = outside = 0
    for net, m0, space in nets:
        for seed in range(3):
            tr = run(net, m0, horizon=500, max_steps=200, seed=seed, record_markings=True)
            for m in tr.visited:
                visited += 1
                outside += m.untimed_key() not in space
    verdict(8, len(nets) == 10 and outside == 0,
            f"{len(nets)} nets, {visited} visited markings, {outside} outside the reachable set")


def test_criterion_09_protocol_round_trip():
    seen = {"n": 0, "bad": 0}

    @settings(max_examples=1000, derandomize=True, database=None, deadline=None)
    @given(st.one_of(messages, others))
    def round_trip(m):
        seen["n"] += 1
        seen["bad"] += parse(serialize(m)) != m

    round_trip()
    golden = all(serialize(msg) == (FIXTURES / name).read_bytes().rstrip(b"\n")
                 for name, msg in (("mas_rfidmas.xml", MAS), ("agent_sma.xml", SMA), ("objects_asrs.xml", OBJS)))
    cfg = FmsConfig(order_count=10)
    local, _ = run_agents(cfg)
    net = build_fms_net(cfg)
    server, remote = serve_and_connect(Simulator(net, initial_marking(cfg, net, release_orders(cfg)), seed=cfg.seed))
    try:
        framed, _ = run_agents(cfg, endpoint=remote)
    finally:
        remote.close()
        server.join(5)
    same = framed.to_lines() == local.to_lines() and server.error is None
    verdict(9, seen["n"] >= 1000 and seen["bad"] == 0 and golden and same,
            f"{seen['n']} messages round-tripped ({seen['bad']} mismatches), golden fixtures={golden}, "
            f"framed trace == in-process trace={same}")


def test_criterion_10_repeatability_formula():
    synthetic = compute_repeatability([{"cnc": 50.0}, {"cnc": 60.0}])
    cfg = ScenarioConfig("B", FmsConfig(order_count=50), seeds=(7, 7, 7))
    same_seed = compute_repeatability([r.kpis.utilization for r in run_scenario(cfg)])
    verdict(10, synthetic == 5.0 and same_seed == 0.0,
            f"{{50,60}} -> {synthetic!r}, identical-seed runs -> {same_seed!r}")


def test_criterion_11_choreography_conformance():
    results = checked_agent_repeats()
    totals = {k: sum(len(r.checks[k]) if isinstance(r.checks[k], list) else r.checks[k] for r in results)
              for k in ("violations", "calendar_overlaps", "audit", "busy_overlaps")}
    verdict(11, all(v == 0 for v in totals.values()),
            f"{len(results)} runs: " + ", ".join(f"{k}={v}" for k, v in totals.items()))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
