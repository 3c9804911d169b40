"""Performance indicators computed from simulator event traces."""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..fms.model import ASSEMBLY, CNC, WORK_TRANSITIONS, FmsConfig
from ..petri.net import SimEvent

MS_PER_HOUR = 3_600_000


class IncompleteTrace(Exception):
    def __init__(self, missing: list[int]):
        super().__init__(f"{len(missing)} orders never completed (first: {missing[:5]})")
        self.missing = missing


class InsufficientRuns(ValueError):
    pass


@dataclass
class KpiReport:
    lead_time_mean: float  # ms
    lead_times: dict[int, int]  # order id -> ms
    throughput: float  # orders per hour
    utilization: dict[str, float]  # resource -> percent
    makespan: int  # ms
    orders_completed: int
    orders_released: int
    missing: list[int] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing


def tracked_resources(cfg: FmsConfig) -> tuple[str, ...]:
    return tuple(sorted({*cfg.carriers, CNC, ASSEMBLY}))


def busy_intervals(events: Iterable[SimEvent]) -> dict[str, list[tuple[int, int]]]:
    """Processing intervals per resource. A failed machining start holds
    the CNC during repair but is downtime, not work, so it is not counted."""
    out: dict[str, list[tuple[int, int]]] = {}
    for ev in events:
        if ev.kind != "fire" or ev.transition_id not in WORK_TRANSITIONS:
            continue
        res = ev.payload["binding"][0]["color"]["res"]
        out.setdefault(res, []).append((ev.time, ev.time + ev.payload["delay"]))
    return out


def completion_times(events: Iterable[SimEvent]) -> dict[int, int]:
    return {
        ev.payload["binding"][0]["color"]["order"]: ev.time
        for ev in events
        if ev.kind == "fire" and ev.transition_id == "unload_s3"
    }


def machining_attempts(events: Iterable[SimEvent]) -> tuple[int, int]:
    """(attempts, failures): every machining start either runs or fails."""
    starts = fails = 0
    for ev in events:
        if ev.kind == "fire":
            if ev.transition_id == "cnc_start":
                starts += 1
            elif ev.transition_id == "cnc_fail":
                fails += 1
    return starts + fails, fails


def compute_kpis(
    events: Sequence[SimEvent],
    cfg: FmsConfig,
    release: dict[int, int] | None = None,
    strict: bool = False,
) -> KpiReport:
    """``release`` maps order id to release time (default: every order of
    ``cfg`` released at t=0). With ``strict`` a missing completion raises
    IncompleteTrace; otherwise it is listed in the report."""
    if release is None:
        release = {oid: 0 for oid in range(cfg.order_count)}
    done = completion_times(events)
    missing = sorted(set(release) - set(done))
    if strict and missing:
        raise IncompleteTrace(missing)
    leads = {oid: done[oid] - release[oid] for oid in sorted(done) if oid in release}
    makespan = max(done.values()) if done else 0
    busy = busy_intervals(events)
    util = {}
    for res in tracked_resources(cfg):
        total = sum(b - a for a, b in busy.get(res, ()))
        util[res] = 100.0 * total / makespan if makespan else 0.0
    return KpiReport(
        lead_time_mean=statistics.fmean(leads.values()) if leads else 0.0,
        lead_times=leads,
        throughput=len(done) * MS_PER_HOUR / makespan if makespan else 0.0,
        utilization=util,
        makespan=makespan,
        orders_completed=len(done),
        orders_released=len(release),
        missing=missing,
    )


def overlapping(intervals: Iterable[tuple[int, int]]) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    ivs = sorted(intervals)
    return [(a, b) for a, b in zip(ivs, ivs[1:]) if b[0] < a[1]]


def compute_repeatability(utilizations: Sequence[dict[str, float]]) -> float:
    """Mean over resources of the population std dev of utilization
    across runs, in percentage points."""
    if len(utilizations) < 2:
        raise InsufficientRuns(f"need at least 2 runs, got {len(utilizations)}")
    resources = sorted(set().union(*utilizations))
    if not resources:
        return 0.0
    devs = [statistics.pstdev([u.get(r, 0.0) for u in utilizations]) for r in resources]
    return statistics.fmean(devs)
