"""Conventional centralized dispatcher used as the comparison baseline.

Static routing: the robot feeds station 1, the conveyor serves stations 2
and 3. Orders go through the CNC in strict FIFO: the next order's parts
are only loaded once every part of the previous order has been machined.
There is no negotiation, and a CNC failure blocks all dispatching until
the repair completes.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from ..bridge.coupling import JointTrace, LocalEndpoint, SimEndpoint, task_id
from ..bridge.xmlcodec import ActionCommand
from ..fms.model import ASSEMBLY, CNC, CONVEYOR, ROBOT, BookOrder, FmsConfig, build_fms_net, initial_marking, release_orders
from ..petri.engine import Simulator
from ..petri.net import SimEvent
from ..bridge.translate import OBJECT_OF, ACTIONS

S1_CARRIER = ROBOT
DOWNSTREAM_CARRIER = CONVEYOR


@dataclass
class _Dispatcher:
    orders: deque
    loads: deque = field(default_factory=deque)  # parts of the order currently fed to station 1
    at_s1: deque = field(default_factory=deque)  # (order, part) waiting for the CNC
    conveyor_jobs: deque = field(default_factory=deque)  # (action, order, part) in ready order
    at_s2: dict = field(default_factory=dict)  # order -> parts delivered
    assembly_jobs: deque = field(default_factory=deque)
    machined: dict = field(default_factory=dict)
    busy: set = field(default_factory=set)
    down: bool = False
    feeding: Optional[int] = None
    completions: dict = field(default_factory=dict)

    def _feed_next(self) -> None:
        if self.orders:
            o: BookOrder = self.orders.popleft()
            self.feeding = o.order_id
            self.machined[o.order_id] = 0
            self.loads.extend((o.order_id, p.part_id) for p in o.parts)
        else:
            self.feeding = None

    def commands(self, now: int) -> list[ActionCommand]:
        if self.down:
            return []
        out = []

        def issue(res: str, action: str, order: int, part: int = -1) -> None:
            self.busy.add(res)
            params = {"task_id": task_id(action, order, part), "route_action": action, "order": order, "part": part}
            out.append(ActionCommand(OBJECT_OF[res], ACTIONS[action], params, now))

        if S1_CARRIER not in self.busy and self.loads:
            issue(S1_CARRIER, "move-s1", *self.loads.popleft())
        if CNC not in self.busy and self.at_s1:
            issue(CNC, "machine", *self.at_s1.popleft())
        if DOWNSTREAM_CARRIER not in self.busy and self.conveyor_jobs:
            issue(DOWNSTREAM_CARRIER, *self.conveyor_jobs.popleft())
        if ASSEMBLY not in self.busy and self.assembly_jobs:
            issue(ASSEMBLY, "assemble", self.assembly_jobs.popleft())
        return out

    def on_event(self, ev: SimEvent) -> None:
        if ev.kind == "failure":
            self.down = True
            return
        if ev.kind == "repair":
            self.down = False
            return
        if ev.kind != "fire":
            return
        c = ev.payload["binding"][0]["color"]
        tid = ev.transition_id
        if tid == "unload_s1":
            self.busy.discard(S1_CARRIER)
            self.at_s1.append((c["order"], c["part"]))
        elif tid == "cnc_end":
            self.busy.discard(CNC)
            self.conveyor_jobs.append(("move-s2", c["order"], c["part"]))
            self.machined[c["order"]] += 1
            if self.machined[c["order"]] == 3 and c["order"] == self.feeding:
                self._feed_next()
        elif tid == "unload_s2":
            self.busy.discard(DOWNSTREAM_CARRIER)
            n = self.at_s2.get(c["order"], 0) + 1
            self.at_s2[c["order"]] = n
            if n == 3:
                self.assembly_jobs.append(c["order"])
        elif tid == "asm_end":
            self.busy.discard(ASSEMBLY)
            self.conveyor_jobs.append(("move-s3", c["order"], -1))
        elif tid == "unload_s3":
            self.busy.discard(DOWNSTREAM_CARRIER)
            self.completions[c["order"]] = ev.time

    @property
    def done(self) -> bool:
        return self.feeding is None and not self.orders and len(self.completions) == len(self.machined)


def run_conventional(endpoint: SimEndpoint, orders: list[BookOrder], until: Optional[int] = None) -> JointTrace:
    disp = _Dispatcher(deque(orders))
    disp._feed_next()
    trace = JointTrace()
    while True:
        for cmd in disp.commands(endpoint.clock):
            endpoint.apply(cmd)
        events, status = endpoint.step(until)
        for ev in events:
            trace.entries.append(("sim", ev))
            disp.on_event(ev)
        if status != "running":
            trace.outcome = "complete" if disp.done else status
            break
    trace.completions = dict(disp.completions)
    return trace


def conventional_baseline(cfg: FmsConfig, until: Optional[int] = None) -> JointTrace:
    if S1_CARRIER not in cfg.carriers or DOWNSTREAM_CARRIER not in cfg.carriers:
        raise ValueError("the conventional dispatcher needs both the robot and the conveyor")
    net = build_fms_net(cfg)
    orders = release_orders(cfg)
    sim = Simulator(net, initial_marking(cfg, net, orders), seed=cfg.seed)
    return run_conventional(LocalEndpoint(sim), orders, until)
