"""The hybrid agent: lock-step coupling of the agent layer and the simulator.

One coupled step is: settle the agents at the current instant (order
admission, task announcements, message delivery until quiescent), apply the
resulting action commands, fire one simulator step, translate its events
back into notifications and state updates. The joint trace records both
sides in the order things happened.
"""
from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from ..fms.model import RESOURCE_STATION, BookOrder
from ..mes.messages import AgentMessage, TaskAnnouncement
from ..mes.system import DivergenceError, MesSystem
from ..petri.engine import Simulator
from ..petri.net import NetError, SimEvent
from .translate import TRANSITION_STATION, Notification, UnknownObject, command_color, translate_decision, translate_event
from .xmlcodec import ActionCommand, StateUpdate

CAPABILITY = {"move-s1": "transport", "move-s2": "transport", "move-s3": "transport",
              "machine": "milling", "assemble": "assembly"}
NEXT_PART_STEP = {"move-s1": "machine", "machine": "move-s2"}


class SimEndpoint(Protocol):
    clock: int

    def apply(self, cmd: ActionCommand) -> None: ...

    def step(self, until: Optional[int]) -> tuple[list[SimEvent], str]: ...

    def close(self) -> None: ...


def command_record(cmd: ActionCommand) -> dict:
    return {"target": cmd.target, "action": cmd.action, "params": cmd.params, "issued_at": cmd.issued_at}


class LocalEndpoint:
    """In-process simulator endpoint."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self._seen = 0

    @property
    def clock(self) -> int:
        return self.sim.clock

    def apply(self, cmd: ActionCommand) -> None:
        try:
            self.sim.inject("cmd", command_color(cmd), payload=command_record(cmd))
        except (NetError, UnknownObject) as exc:
            raise DivergenceError(f"simulator rejected {cmd}: {exc}") from exc

    def step(self, until: Optional[int]) -> tuple[list[SimEvent], str]:
        fired = self.sim.step(until)
        status = "running" if fired is not None else self.sim.events[-1].kind
        new = self.sim.events[self._seen:]
        self._seen = len(self.sim.events)
        return new, status

    def close(self) -> None:
        pass


@dataclass
class JointTrace:
    """Interleaved agent messages and simulator events."""

    entries: list = field(default_factory=list)  # ("mas", AgentMessage) | ("sim", SimEvent)
    outcome: str = "running"
    completions: dict = field(default_factory=dict)  # order id -> completion time

    @property
    def messages(self) -> list[AgentMessage]:
        return [x for side, x in self.entries if side == "mas"]

    @property
    def events(self) -> list[SimEvent]:
        return [x for side, x in self.entries if side == "sim"]

    def to_lines(self) -> bytes:
        out = []
        for side, x in self.entries:
            rec = {"side": side, **x.to_record()}
            out.append(json.dumps(rec, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        return b"".join(out)


def task_id(action: str, order: int, part: int = -1) -> str:
    return f"{action}/o{order}" + (f"/p{part}" if part >= 0 else "")


class HybridAgent:
    """Feeds orders and tasks to the agent layer and turns its decisions
    into simulator commands. At most ``window`` orders are in the shop at
    once; the rest wait in the release queue (their lead time still counts
    from t=0)."""

    def __init__(self, system: MesSystem, orders: Iterable[BookOrder], window: int = 6):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.system = system
        self.window = window
        self.queue = deque(orders)
        self.total = len(self.queue)
        self.active: dict[int, int] = {}  # order id -> parts still to reach assembly
        self.ready: list[TaskAnnouncement] = []
        self.running: set[str] = set()
        self.commands: list[ActionCommand] = []
        self.dispatches = 0
        self.completions: dict[int, int] = {}

    # -- outbound ---------------------------------------------------------

    def admit(self, now: int) -> int:
        d = self.system.directory
        n = 0
        while self.queue and len(self.active) < self.window:
            order = self.queue.popleft()
            self.active[order.order_id] = len(order.parts)
            parts = [{"part_id": p.part_id, "kind": p.kind} for p in order.parts]
            self.system.send_from_ha(d.sma, "inform", f"order-{order.order_id}",
                                     {"kind": "order-released", "order_id": order.order_id, "parts": parts}, now)
            for p in order.parts:
                self._ready("move-s1", order.order_id, p.part_id)
            n += 1
        return n

    def _ready(self, action: str, order: int, part: int = -1) -> None:
        self.ready.append(TaskAnnouncement(task_id(action, order, part), order, (CAPABILITY[action],), action, part))

    def announce(self, now: int) -> int:
        batch, self.ready = self.ready, []
        for t in batch:
            self.running.add(t.task_id)
            self.system.send_from_ha(self.system.directory.am, "request", t.task_id,
                                     {"kind": "task", "task": t.to_payload()}, now)
        return len(batch)

    # -- inbound from agents ----------------------------------------------

    def on_message(self, msg: AgentMessage, now: int) -> None:
        if msg.performative == "command" and msg.kind == "action":
            try:
                cmd = translate_decision(msg.payload, now)
            except UnknownObject as exc:
                raise DivergenceError(f"dispatch names unknown object {exc}") from exc
            self.dispatches += 1
            self.commands.append(cmd)
        elif msg.performative == "refuse" and msg.kind == "no-data":
            pass  # the manager retries once order data shows up
        else:
            raise DivergenceError(f"hybrid agent cannot handle {msg.performative}/{msg.kind} from {msg.sender}")

    # -- inbound from the simulator -----------------------------------------

    def on_event(self, ev: SimEvent) -> None:
        out = translate_event(ev)
        if isinstance(out, Notification):
            self._notify(out)
        elif ev.kind == "fire":
            self._record(out, TRANSITION_STATION.get(ev.transition_id or ""))

    def _record(self, upd: StateUpdate, station: Optional[str]) -> None:
        if station is None:
            return
        d = self.system.directory
        value = {"state": upd.state, "time": upd.timestamp, "payload": upd.payload}
        self.system.send_from_ha(d.dba_station[station], "command", f"hsa-{station}",
                                 {"kind": "write", "key": f"object/{upd.object}", "value": value}, upd.timestamp)

    def _notify(self, n: Notification) -> None:
        tid = task_id(n.action, n.order, n.part)
        if tid not in self.running:
            raise DivergenceError(f"{n.kind} event for unknown task {tid}")
        d = self.system.directory
        payload = {"kind": n.kind, "task_id": tid, "resource": n.resource, "action": n.action,
                   "order_id": n.order, "part_id": n.part}
        station = RESOURCE_STATION[n.resource]
        self.system.send_from_ha(d.smona[station], "notify", tid, payload, n.time)
        self.system.send_from_ha(d.smca, "notify", tid, dict(payload), n.time)
        if n.kind != "completed":
            return
        self.running.discard(tid)
        if n.action in NEXT_PART_STEP:
            self._ready(NEXT_PART_STEP[n.action], n.order, n.part)
        elif n.action == "move-s2":
            self.active[n.order] -= 1
            if self.active[n.order] == 0:
                self._ready("assemble", n.order)
        elif n.action == "assemble":
            self._ready("move-s3", n.order)
        elif n.action == "move-s3":
            del self.active[n.order]
            self.completions[n.order] = n.time

    @property
    def done(self) -> bool:
        return not self.queue and not self.active


class Coupler:
    """``pace`` > 0 sleeps that many wall seconds per simulated second
    (demonstration only; experiments run in logical time)."""

    def __init__(self, endpoint: SimEndpoint, system: MesSystem, ha: HybridAgent, pace: float = 0.0):
        self.endpoint = endpoint
        self.pace = pace
        self.system = system
        self.ha = ha
        self.trace = JointTrace()

    def _drain(self, now: int) -> None:
        start = len(self.system.transcript)
        self.system.drain(now)
        for m in self.system.transcript[start:]:
            self.trace.entries.append(("mas", m))
            if m.receiver.role == "HA":
                self.ha.on_message(m, now)

    def settle(self, now: int) -> int:
        """Run the agent side to quiescence at ``now``; returns the number
        of commands applied to the simulator."""
        applied = 0
        while True:
            self._drain(now)
            admitted = self.ha.admit(now)
            self._drain(now)
            announced = self.ha.announce(now)
            self._drain(now)
            cmds, self.ha.commands = self.ha.commands, []
            for c in cmds:
                self.endpoint.apply(c)
            applied += len(cmds)
            if not (admitted or announced or cmds):
                return applied

    def run(self, until: Optional[int] = None) -> JointTrace:
        while True:
            before = self.endpoint.clock
            self.settle(before)
            events, status = self.endpoint.step(until)
            if self.pace > 0 and self.endpoint.clock > before:
                time.sleep((self.endpoint.clock - before) / 1000 * self.pace)
            for ev in events:
                self.trace.entries.append(("sim", ev))
                self.ha.on_event(ev)
            if status == "running":
                continue
            # the agents were settled before this step, so nothing can unblock the net
            self.trace.outcome = "complete" if self.ha.done else status
            break
        self.trace.completions = dict(self.ha.completions)
        return self.trace


def step_coupled(
    endpoint: SimEndpoint, system: MesSystem, ha: HybridAgent, until: Optional[int] = None, pace: float = 0.0
) -> JointTrace:
    return Coupler(endpoint, system, ha, pace).run(until)


def audit(trace: JointTrace) -> list[str]:
    """1:1 checks: every applied command has exactly one dispatch, every
    completion event exactly one notification to the shop monitor."""
    problems = []
    dispatched: dict[str, int] = {}
    notified: dict[str, int] = {}
    for m in trace.messages:
        if m.performative == "command" and m.kind == "dispatch":
            tid = m.payload["task"]["task_id"]
            dispatched[tid] = dispatched.get(tid, 0) + 1
        if m.sender.role == "HA" and m.receiver.role == "SMCA" and m.kind == "completed":
            notified[m.payload["task_id"]] = notified.get(m.payload["task_id"], 0) + 1
    applied: dict[str, int] = {}
    completed: dict[str, int] = {}
    for ev in trace.events:
        if ev.kind == "external-command":
            tid = ev.payload["command"]["params"]["task_id"]
            applied[tid] = applied.get(tid, 0) + 1
        out = translate_event(ev) if ev.kind in ("fire", "failure", "repair") else None
        if isinstance(out, Notification) and out.kind == "completed":
            tid = task_id(out.action, out.order, out.part)
            completed[tid] = completed.get(tid, 0) + 1
    for tid in sorted(set(applied) | set(dispatched)):
        if applied.get(tid, 0) != 1 or dispatched.get(tid, 0) != 1:
            problems.append(f"{tid}: {applied.get(tid, 0)} commands for {dispatched.get(tid, 0)} dispatches")
    for tid in sorted(set(completed) | set(notified)):
        if completed.get(tid, 0) != 1 or notified.get(tid, 0) != 1:
            problems.append(f"{tid}: {completed.get(tid, 0)} completions for {notified.get(tid, 0)} notifications")
    return problems
