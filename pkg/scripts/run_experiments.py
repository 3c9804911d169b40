#!/usr/bin/env python3
"""Run both scenarios under both controllers and write the comparison tables.

    python3 scripts/run_experiments.py --out results/
"""
import argparse
import time
from pathlib import Path

from hybrid_fms.fms import FmsConfig
from hybrid_fms.harness import emit
from hybrid_fms.harness.scenario import CONTROLLERS, DEFAULT_SEEDS, SCENARIOS, ScenarioConfig, run_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--orders", type=int, default=1000)
    ap.add_argument("--seeds", type=int, nargs="+", default=list(DEFAULT_SEEDS))
    ap.add_argument("--repair-ms", type=int, default=30_000)
    ap.add_argument("--check", action="store_true", help="also replay transcripts and calendars")
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    results = []
    for scenario in SCENARIOS:
        for controller in CONTROLLERS:
            sc = ScenarioConfig(scenario, FmsConfig(order_count=args.orders), seeds=tuple(args.seeds),
                                controller=controller, repair_time=args.repair_ms, check=args.check)
            t0 = time.perf_counter()
            batch = run_scenario(sc)
            lead = sum(r.kpis.lead_time_mean for r in batch) / len(batch)
            tp = sum(r.kpis.throughput for r in batch) / len(batch)
            bad = [r.config["seed"] for r in batch if r.outcome != "complete" or any(r.checks.values())]
            print(f"{scenario} {controller:<12} lead={lead:>12.0f} ms  throughput={tp:7.2f}/h  "
                  f"{time.perf_counter() - t0:5.1f}s" + (f"  problems in seeds {bad}" if bad else ""))
            results += batch
    for p in emit.write_all(results, args.out):
        print(p)


if __name__ == "__main__":
    main()
