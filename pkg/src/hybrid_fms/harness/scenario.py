"""Scenario runner: scenario A (no disturbances) and B (CNC failures),
agent controller or the conventional baseline."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from ..bridge.coupling import HybridAgent, JointTrace, LocalEndpoint, SimEndpoint, audit, step_coupled
from ..fms.model import FailureModel, FmsConfig, build_fms_net, initial_marking, release_orders
from ..mes.conformance import check_transcript
from ..mes.system import MesSystem
from ..petri.engine import Simulator
from .baseline import conventional_baseline
from .kpi import KpiReport, busy_intervals, compute_kpis, overlapping

SCENARIOS = ("A", "B")
CONTROLLERS = ("agent-mes", "conventional")
CONTROLLER_ALIASES = {"agents": "agent-mes", "agent": "agent-mes", "agent-mes": "agent-mes", "conventional": "conventional"}
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
HORIZON_CAP = 10**9


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "A"
    base: FmsConfig = field(default_factory=FmsConfig)
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    controller: str = "agent-mes"
    failure_probability: float = 0.2
    repair_time: int = 30_000
    policy: str = "pipelined"
    window: int = 6
    s1_limit: int = 3
    horizon: int = HORIZON_CAP
    check: bool = False  # replay transcripts and calendars (slow)
    keep_trace: bool = False

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.controller not in CONTROLLERS:
            object.__setattr__(self, "controller", CONTROLLER_ALIASES.get(self.controller, self.controller))
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    @property
    def runs(self) -> int:
        return len(self.seeds)

    def fms_for(self, seed: int) -> FmsConfig:
        cfg = replace(self.base, seed=seed, failure=None)
        if self.scenario == "B":
            cfg = cfg.with_failure(self.failure_probability, self.repair_time)
        return cfg


@dataclass
class RunResult:
    config: dict  # echo, enough to reproduce the run
    kpis: KpiReport
    outcome: str
    wall_seconds: float
    checks: dict = field(default_factory=dict)
    trace: Optional[JointTrace] = None


def echo(sc: ScenarioConfig, cfg: FmsConfig) -> dict:
    return {
        "scenario": sc.scenario,
        "controller": sc.controller,
        "seed": cfg.seed,
        "order_count": cfg.order_count,
        "transport_time": cfg.transport_time,
        "cnc_time": cfg.cnc_time,
        "assembly_time": cfg.assembly_time,
        "carriers": list(cfg.carriers),
        "failure_probability": cfg.failure.probability if cfg.failure else None,
        "repair_time": cfg.repair_time,
        "policy": sc.policy,
        "window": sc.window,
        "s1_limit": sc.s1_limit,
        "horizon": sc.horizon,
    }


def from_echo(e: dict) -> tuple[ScenarioConfig, FmsConfig]:
    base = FmsConfig(
        order_count=e["order_count"], transport_time=e["transport_time"], cnc_time=e["cnc_time"],
        assembly_time=e["assembly_time"], seed=e["seed"], carriers=tuple(e["carriers"]),
    )
    sc = ScenarioConfig(
        scenario=e["scenario"], base=base, seeds=(e["seed"],), controller=e["controller"],
        failure_probability=e["failure_probability"] or 0.2, repair_time=e["repair_time"] or 30_000,
        policy=e["policy"], window=e["window"], s1_limit=e["s1_limit"], horizon=e["horizon"],
    )
    return sc, sc.fms_for(e["seed"])


def run_agents(
    cfg: FmsConfig,
    policy: str = "pipelined",
    window: int = 6,
    s1_limit: int = 3,
    until: Optional[int] = None,
    endpoint: Optional[SimEndpoint] = None,
) -> tuple[JointTrace, MesSystem]:
    orders = release_orders(cfg)
    if endpoint is None:
        net = build_fms_net(cfg)
        endpoint = LocalEndpoint(Simulator(net, initial_marking(cfg, net, orders), seed=cfg.seed))
    mas = MesSystem(cfg, policy=policy, s1_limit=s1_limit)
    ha = HybridAgent(mas, orders, window=window)
    return step_coupled(endpoint, mas, ha, until), mas


def run_one(sc: ScenarioConfig, seed: int) -> RunResult:
    cfg = sc.fms_for(seed)
    t0 = time.perf_counter()
    mas = None
    if sc.controller == "agent-mes":
        trace, mas = run_agents(cfg, sc.policy, sc.window, sc.s1_limit, sc.horizon)
    else:
        trace = conventional_baseline(cfg, sc.horizon)
    wall = time.perf_counter() - t0
    events = trace.events
    kpis = compute_kpis(events, cfg)
    checks = {}
    if sc.check:
        busy = busy_intervals(events)
        checks["busy_overlaps"] = sum(len(overlapping(iv)) for iv in busy.values())
        if mas is not None:
            checks["violations"] = check_transcript(trace.messages, require_complete=trace.outcome == "complete")
            checks["calendar_overlaps"] = mas.am.calendar.overlaps()
            checks["audit"] = audit(trace)
    return RunResult(echo(sc, cfg), kpis, trace.outcome, wall, checks, trace if sc.keep_trace else None)


def run_scenario(sc: ScenarioConfig) -> list[RunResult]:
    return [run_one(sc, s) for s in sc.seeds]


def config_dict(sc: ScenarioConfig) -> dict:
    d = asdict(sc)
    d["seeds"] = list(sc.seeds)
    d["base"]["carriers"] = list(sc.base.carriers)
    d["base"].pop("failure", None)
    return d
