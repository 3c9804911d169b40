"""Command line: run, compare, validate-model, replay, export-model."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..bridge.coupling import JointTrace
from ..bridge.netxml import load_net, save_net
from ..fms.config import load_config
from ..fms.model import FmsConfig, build_fms_net, initial_marking, release_orders
from ..mes.conformance import check_transcript
from ..mes.messages import AgentMessage
from ..petri.engine import replay, validate
from ..petri.net import NetError, SimEvent
from . import emit
from .kpi import KpiReport, compute_kpis
from .scenario import HORIZON_CAP, RunResult, ScenarioConfig, config_dict, from_echo, run_one


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=["A", "B"], default=None)
    p.add_argument("--controller", choices=["agents", "conventional"], default=None)
    p.add_argument("--orders", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="first seed (default 1)")
    p.add_argument("--runs", type=int, default=None, help="number of seeds (default 5)")
    p.add_argument("--repair-ms", type=int, default=None)
    p.add_argument("--failure-probability", type=float, default=None)
    p.add_argument("--policy", choices=["pipelined", "sequential"], default=None)
    p.add_argument("--window", type=int, default=None, help="orders admitted to the shop at once")
    p.add_argument("--s1-limit", type=int, default=None, help="parts allowed at station 1 at once")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--config", type=Path, default=None, help="key = value file; flags override it")
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--trace", action="store_true", help="also write each run's joint trace")
    p.add_argument("--check", action="store_true", help="replay transcripts and calendars")
    p.add_argument("--print-config", action="store_true", help="print the effective settings and exit")


def scenario_from_args(args: argparse.Namespace) -> ScenarioConfig:
    base = FmsConfig()
    extra: dict[str, str] = {}
    if args.config is not None:
        loaded = load_config(args.config, base)
        base, extra = loaded.fms, loaded.extra
    scenario = args.scenario or extra.get("scenario", "A")
    if base.failure is not None and args.scenario is None:
        scenario = "B"
    if args.orders is not None:
        base = replace(base, order_count=args.orders)

    def pick(flag, key, conv, default):
        if flag is not None:
            return flag
        return conv(extra[key]) if key in extra else default

    first = pick(args.seed, "seed", int, base.seed if args.config else 1)
    runs = pick(args.runs, "runs", int, 5)
    if runs < 1:
        raise ValueError("--runs must be >= 1")
    return ScenarioConfig(
        scenario=scenario,
        base=replace(base, failure=None),
        seeds=tuple(range(first, first + runs)),
        controller=pick(args.controller, "controller", str, "agent-mes"),
        failure_probability=pick(args.failure_probability, "failure_probability", float,
                                 base.failure.probability if base.failure else 0.2),
        repair_time=pick(args.repair_ms, "repair_time", int, base.failure.repair_time if base.failure else 30_000),
        policy=pick(args.policy, "policy", str, "pipelined"),
        window=pick(args.window, "window", int, 6),
        s1_limit=pick(args.s1_limit, "s1_limit", int, 3),
        horizon=pick(args.horizon, "horizon", int, HORIZON_CAP),
        check=args.check,
        keep_trace=args.trace,
    )


def result_record(r: RunResult) -> dict:
    k = r.kpis
    return {
        "config": r.config,
        "outcome": r.outcome,
        "wall_seconds": round(r.wall_seconds, 3),
        "checks": {key: (len(v) if isinstance(v, list) else v) for key, v in r.checks.items()},
        "kpis": {
            "lead_time_mean": k.lead_time_mean,
            "throughput": k.throughput,
            "utilization": k.utilization,
            "makespan": k.makespan,
            "orders_completed": k.orders_completed,
            "orders_released": k.orders_released,
            "missing": k.missing,
        },
    }


def result_from_record(rec: dict) -> RunResult:
    k = rec["kpis"]
    kpis = KpiReport(k["lead_time_mean"], {}, k["throughput"], k["utilization"], k["makespan"],
                     k["orders_completed"], k["orders_released"], k["missing"])
    return RunResult(rec["config"], kpis, rec["outcome"], rec["wall_seconds"], rec.get("checks", {}))


def _summary(r: RunResult) -> str:
    c, k = r.config, r.kpis
    line = (f"{c['scenario']} {c['controller']:<12} seed={c['seed']} {r.outcome:<8} "
            f"orders={k.orders_completed}/{k.orders_released} lead={k.lead_time_mean:.0f}ms "
            f"throughput={k.throughput:.2f}/h makespan={k.makespan}ms wall={r.wall_seconds:.2f}s")
    if r.checks:
        line += " checks=" + ",".join(f"{key}:{len(v) if isinstance(v, list) else v}" for key, v in r.checks.items())
    return line


def write_trace(path: Path, config: dict, trace: JointTrace) -> None:
    header = json.dumps({"side": "header", "config": config, "outcome": trace.outcome}, sort_keys=True)
    with path.open("wb") as f:
        f.write(header.encode() + b"\n")
        f.write(trace.to_lines())


def read_trace(path: Path) -> tuple[dict, JointTrace]:
    lines = path.read_bytes().splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    head = json.loads(lines[0])
    if head.get("side") != "header":
        raise ValueError(f"{path} has no header line")
    trace = JointTrace(outcome=head["outcome"])
    for raw in lines[1:]:
        rec = json.loads(raw)
        side = rec.pop("side")
        trace.entries.append((side, SimEvent.from_record(rec) if side == "sim" else AgentMessage.from_record(rec)))
    return head["config"], trace


def cmd_run(args: argparse.Namespace) -> int:
    sc = scenario_from_args(args)
    if args.print_config:
        print(json.dumps(config_dict(sc), indent=1, sort_keys=True))
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in sc.seeds:
        r = run_one(sc, seed)
        print(_summary(r), flush=True)
        if r.trace is not None:
            write_trace(args.out / f"trace-{sc.scenario}-{sc.controller}-{seed}.jsonl", r.config, r.trace)
            r.trace = None
        results.append(r)
    stem = f"run-{sc.scenario}-{sc.controller}"
    (args.out / f"{stem}.raw.json").write_text(
        json.dumps([result_record(r) for r in results], indent=1, sort_keys=True) + "\n")
    (args.out / f"{stem}.csv").write_bytes(emit.to_csv(results))
    failed = [r for r in results if r.outcome != "complete" or any(r.checks.values())]
    return 1 if failed else 0


def cmd_compare(args: argparse.Namespace) -> int:
    results = []
    for p in sorted(args.indir.glob("run-*.raw.json")):
        results.extend(result_from_record(rec) for rec in json.loads(p.read_text()))
    if not results:
        print(f"no run-*.raw.json files in {args.indir}", file=sys.stderr)
        return 2
    for p in emit.write_all(results, args.out or args.indir, stem="comparison"):
        print(p)
    sys.stdout.write(emit.to_gnuplot(results, "lead_time_mean_ms").decode())
    sys.stdout.write(emit.to_gnuplot(results, "throughput_per_hour").decode())
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        net, marking = load_net(args.file)
    except (ValueError, NetError) as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return 1
    problems = validate(net)
    for msg in problems:
        print(f"{args.file}: {msg}", file=sys.stderr)
    if problems:
        return 1
    tokens = sum(len(v) for v in marking.tokens.values()) if marking else 0
    print(f"{args.file}: ok ({len(net.places)} places, {len(net.transitions)} transitions, "
          f"{len(net.arcs)} arcs, {tokens} tokens)")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    cfg = FmsConfig(order_count=args.orders)
    if args.scenario == "B":
        cfg = cfg.with_failure()
    net = build_fms_net(cfg)
    save_net(args.file, net, initial_marking(cfg, net, release_orders(cfg)))
    print(args.file)
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    config, trace = read_trace(args.file)
    sc, cfg = from_echo(config)
    net = build_fms_net(cfg)
    try:
        replay(net, initial_marking(cfg, net, release_orders(cfg)), trace.events)
    except NetError as exc:
        print(f"{args.file}: replay failed: {exc}", file=sys.stderr)
        return 1
    k = compute_kpis(trace.events, cfg)
    print(f"{args.file}: {len(trace.events)} events replayed, outcome {trace.outcome}")
    print(f"orders={k.orders_completed}/{k.orders_released} lead={k.lead_time_mean:.0f}ms "
          f"throughput={k.throughput:.2f}/h makespan={k.makespan}ms")
    msgs = trace.messages
    if msgs:
        v = check_transcript(msgs, require_complete=trace.outcome == "complete")
        print(f"{len(msgs)} messages, {len(v)} choreography violations")
        for line in v[:10]:
            print("  " + line)
        if v:
            return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybrid-fms", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="run a scenario over several seeds"))
    p = sub.add_parser("compare", help="merge run results into comparison tables")
    p.add_argument("--in", dest="indir", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    p = sub.add_parser("validate-model", help="check a net model file")
    p.add_argument("file", type=Path)
    p = sub.add_parser("replay", help="re-check a joint trace written by run --trace")
    p.add_argument("file", type=Path)
    p = sub.add_parser("export-model", help="write the FMS net and initial marking as XML")
    p.add_argument("file", type=Path)
    p.add_argument("--orders", type=int, default=1)
    p.add_argument("--scenario", choices=["A", "B"], default="A")
    return ap


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "validate-model": cmd_validate,
            "replay": cmd_replay, "export-model": cmd_export}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
