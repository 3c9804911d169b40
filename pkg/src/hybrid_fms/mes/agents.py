"""Role automata of the execution layer.

Every agent is a state object plus a handler. ``handle_message(state,
msg)`` is deterministic and depends only on the state and the message: the
handler updates ``state`` in place, and returns it with the outgoing
messages. Callers that need the previous state keep a copy.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Optional

from ..fms.model import STATIONS, RESOURCE_STATION
from .calendar import Allocation, ResourceCalendar, allocate
from .database import Database
from .messages import AgentId, AgentMessage, MalformedTask, Outbox, TaskAnnouncement
from .ontology import CapabilityRecord, NoCapableStation, match_capability

log = logging.getLogger(__name__)

# pipelined dispatch serves downstream work first so parts keep flowing
STAGE_RANK = {"move-s3": 0, "assemble": 1, "move-s2": 2, "machine": 3, "move-s1": 4}
ROUTE_INDEX = {"move-s1": 0, "machine": 1, "move-s2": 2, "assemble": 3, "move-s3": 4}
POLICIES = ("pipelined", "sequential")


@dataclass(frozen=True)
class Directory:
    """Who is who. Shared read-only by all agents."""

    ha: AgentId
    sma: AgentId
    am: AgentId
    smca: AgentId
    dba_shop: AgentId
    sca: dict
    smona: dict
    ami: dict
    dba_station: dict
    mra: dict  # resource -> AgentId

    @classmethod
    def build(cls, resources: list[str]) -> "Directory":
        mra = {}
        for s in STATIONS:
            own = [r for r in resources if RESOURCE_STATION[r] == s]
            for i, r in enumerate(own):
                mra[r] = AgentId("MRA", i, s)
        return cls(
            AgentId("HA"),
            AgentId("SMA"),
            AgentId("AM"),
            AgentId("SMCA"),
            AgentId("DBA-shop"),
            {s: AgentId("SCA", 0, s) for s in STATIONS},
            {s: AgentId("SMonA", 0, s) for s in STATIONS},
            {s: AgentId("AMI", 0, s) for s in STATIONS},
            {s: AgentId("DBA-station", 0, s) for s in STATIONS},
            mra,
        )

    def all_agents(self) -> list[AgentId]:
        out = [self.sma, self.am, self.smca, self.dba_shop]
        for table in (self.sca, self.smona, self.ami, self.dba_station):
            out.extend(table[s] for s in STATIONS)
        out.extend(self.mra[r] for r in sorted(self.mra))
        return out


@dataclass
class AgentState:
    id: AgentId
    directory: Directory
    next_seq: int = 0
    ignored: list[tuple[int, str, str]] = field(default_factory=list)

    def outbox(self) -> Outbox:
        return Outbox(self.id, self.next_seq)

    def flush(self, box: Outbox) -> list[AgentMessage]:
        self.next_seq = box.next_seq
        return box.sent

    def ignore(self, msg: AgentMessage) -> list[AgentMessage]:
        # negotiation never fails by assumption; stray messages are logged only
        log.warning("%s ignored %s/%s from %s", self.id, msg.performative, msg.kind, msg.sender)
        self.ignored.append((msg.sent_at, msg.performative, msg.kind))
        return []


@dataclass
class DbaState(AgentState):
    db: Database = field(default_factory=lambda: Database("db"))


@dataclass
class AmState(AgentState):
    records: list[CapabilityRecord] = field(default_factory=list)
    policy: str = "pipelined"
    s1_limit: int = 3
    tasks: dict[str, TaskAnnouncement] = field(default_factory=dict)
    status: dict[str, str] = field(default_factory=dict)
    queues: dict[str, list] = field(default_factory=dict)
    reserved: dict[str, str] = field(default_factory=dict)  # resource -> task
    holding: dict[str, str] = field(default_factory=dict)  # resource -> task
    blocked: set = field(default_factory=set)  # resources a station reported busy
    failed: set = field(default_factory=set)
    no_data: list[str] = field(default_factory=list)
    calendar: ResourceCalendar = field(default_factory=ResourceCalendar)
    allocations: dict[str, Allocation] = field(default_factory=dict)
    s1_wip: int = 0


@dataclass
class ScaState(AgentState):
    station: str = ""
    db: Database = field(default_factory=lambda: Database("station"))


@dataclass
class MraState(AgentState):
    resource: str = ""
    current: Optional[str] = None
    executed: int = 0


@dataclass
class SmonaState(AgentState):
    db: Database = field(default_factory=lambda: Database("station"))


@dataclass
class SmcaState(AgentState):
    events: int = 0


@dataclass
class SmaState(AgentState):
    orders: dict[int, str] = field(default_factory=dict)


@dataclass
class AmiState(AgentState):
    forwarded: int = 0


# -- database agents ---------------------------------------------------------


def _dba(state: DbaState, msg: AgentMessage) -> list[AgentMessage]:
    box = state.outbox()
    p = msg.payload
    now = msg.sent_at
    if msg.performative == "query" and msg.kind in ("task-data", "lookup"):
        rec = state.db.query(p["key"])
        reply = {"kind": msg.kind, "key": p["key"], "found": rec is not None,
                 "value": rec.value if rec is not None else None}
        if "task_id" in p:
            reply["task_id"] = p["task_id"]
        box.send(msg.sender, "inform", msg.conversation_id, reply, now)
    elif msg.performative == "accept" and msg.kind == "allocation":
        alloc = p["allocation"]
        state.db.write(f"allocation/{alloc['task_id']}", alloc, now)
        state.db.write(f"task/{alloc['task_id']}", {"status": "allocated", "task": p["task"]}, now)
        sca = state.directory.sca[alloc["station"]]
        box.send(sca, "inform", msg.conversation_id,
                 {"kind": "requirements", "task": p["task"], "allocation": alloc}, now)
    elif msg.performative == "command" and msg.kind in ("order-status", "write"):
        key = p["key"] if msg.kind == "write" else f"order/{p['order_id']}"
        value = p["value"] if msg.kind == "write" else {"status": p["status"], "parts": p.get("parts", [])}
        state.db.write(key, value, now)
    else:
        return state.ignore(msg)
    return state.flush(box)


# -- agent manager: allocations ----------------------------------------------


def _queue_name(state: AmState, task: TaskAnnouncement) -> str:
    return "all" if state.policy == "sequential" else task.required_capabilities[0]


def _priority(state: AmState, task: TaskAnnouncement) -> tuple:
    if state.policy == "sequential":
        slot = task.part_id if task.part_id >= 0 else 1 << 40
        return (task.order_id, slot, ROUTE_INDEX.get(task.action, 9), task.task_id)
    return (STAGE_RANK.get(task.action, 9), task.order_id, task.part_id, task.task_id)


def _enqueue(state: AmState, task: TaskAnnouncement) -> None:
    heapq.heappush(state.queues.setdefault(_queue_name(state, task), []), (_priority(state, task), task.task_id))
    state.status[task.task_id] = "queued"


def _free(state: AmState, resource: str) -> bool:
    # held resources stay eligible: only the station's refusal marks them busy
    return (
        resource not in state.reserved
        and resource not in state.failed
        and resource not in state.blocked
    )


def _pick(state: AmState, task: TaskAnnouncement, now: int) -> Optional[tuple[str, str]]:
    caps = task.required_capabilities
    free_by_station: dict[str, str] = {}
    for r in state.records:
        if r.capability in caps and _free(state, r.resource) and r.station not in free_by_station:
            free_by_station[r.station] = r.resource
    try:
        ranked = match_capability(caps, state.records, {s: now for s in free_by_station})
    except NoCapableStation:
        return None
    for s in ranked:
        if s in free_by_station:
            return s, free_by_station[s]
    return None


def _busy_count(state: AmState) -> int:
    return len(state.reserved) + len(state.holding)


def _try_dispatch(state: AmState, box: Outbox, now: int) -> None:
    for name in sorted(state.queues):
        q = state.queues[name]
        while q:
            _, tid = q[0]
            task = state.tasks[tid]
            if state.policy == "sequential" and _busy_count(state) > 0:
                break
            if state.policy == "pipelined" and task.action == "move-s1" and state.s1_wip >= state.s1_limit:
                break
            choice = _pick(state, task, now)
            if choice is None:
                break
            heapq.heappop(q)
            station, resource = choice
            state.reserved[resource] = tid
            if task.action == "move-s1":
                state.s1_wip += 1
            state.status[tid] = "asking"
            box.send(
                state.directory.sca[station], "query", tid,
                {"kind": "availability", "task_id": tid, "capability": task.required_capabilities[0],
                 "resource": resource},
                now,
            )


def _duration(state: AmState, resource: str, capability: str) -> int:
    for r in state.records:
        if r.resource == resource and r.capability == capability:
            return int(r.parameters.get("process_time", 0))
    return 0


def _am(state: AmState, msg: AgentMessage) -> list[AgentMessage]:
    box = state.outbox()
    p = msg.payload
    now = msg.sent_at
    d = state.directory
    if msg.performative == "request" and msg.kind == "task":
        try:
            task = TaskAnnouncement.from_payload(p["task"])
        except MalformedTask as exc:
            box.send(msg.sender, "refuse", msg.conversation_id, {"kind": "malformed", "reason": str(exc)}, now)
            return state.flush(box)
        state.tasks[task.task_id] = task
        state.status[task.task_id] = "announced"
        box.send(d.dba_shop, "query", task.task_id,
                 {"kind": "task-data", "key": f"order/{task.order_id}", "task_id": task.task_id}, now)
    elif msg.performative == "inform" and msg.kind == "task-data":
        tid = p["task_id"]
        if p["found"]:
            _enqueue(state, state.tasks[tid])
            _try_dispatch(state, box, now)
        else:
            state.status[tid] = "no-data"
            state.no_data.append(tid)
            box.send(d.ha, "refuse", tid, {"kind": "no-data", "task_id": tid}, now)
    elif msg.performative == "propose" and msg.kind == "availability":
        tid = p["task_id"]
        task = state.tasks[tid]
        res = p["resource"]
        state.reserved.pop(res, None)
        start = p["earliest_start"]
        end = start + _duration(state, res, task.required_capabilities[0])
        alloc = allocate(state.calendar, tid, p["station"], (res,), (start, end))
        state.allocations[tid] = alloc
        state.holding[res] = tid
        state.status[tid] = "allocated"
        if task.action == "move-s2":
            state.s1_wip -= 1
        box.send(d.dba_shop, "accept", tid,
                 {"kind": "allocation", "allocation": alloc.to_payload(), "task": task.to_payload()}, now)
    elif msg.performative == "refuse" and msg.kind == "availability":
        tid = p["task_id"]
        task = state.tasks[tid]
        res = p["resource"]
        state.reserved.pop(res, None)
        state.blocked.add(res)
        if task.action == "move-s1":
            state.s1_wip -= 1
        _enqueue(state, task)
        _try_dispatch(state, box, now)
    elif msg.performative == "notify" and msg.sender == d.smca:
        res = p["resource"]
        if msg.kind == "completed":
            tid = p["task_id"]
            state.calendar.close(res, tid, now)
            state.holding.pop(res, None)
            state.blocked.discard(res)
            state.status[tid] = "done"
            retry, state.no_data = state.no_data, []
            for t in retry:
                state.status[t] = "announced"
                box.send(d.dba_shop, "query", t,
                         {"kind": "task-data", "key": f"order/{state.tasks[t].order_id}", "task_id": t}, now)
        elif msg.kind == "failure":
            state.failed.add(res)
        elif msg.kind == "repair":
            state.failed.discard(res)
            state.blocked.discard(res)
        else:
            return state.ignore(msg)
        _try_dispatch(state, box, now)
    else:
        return state.ignore(msg)
    return state.flush(box)


# -- station level -------------------------------------------------------------


def _sca(state: ScaState, msg: AgentMessage) -> list[AgentMessage]:
    box = state.outbox()
    p = msg.payload
    now = msg.sent_at
    if msg.performative == "query" and msg.kind == "availability":
        res = p["resource"]
        rec = state.db.query(f"resource/{res}")
        status = rec.value["status"] if rec is not None else "idle"
        if RESOURCE_STATION.get(res) == state.station and status == "idle":
            state.db.write(f"resource/{res}", {"status": "reserved", "task_id": p["task_id"]}, now)
            reply = {"kind": "availability", "task_id": p["task_id"], "station": state.station,
                     "available": True, "earliest_start": now, "resource": res}
            box.send(msg.sender, "propose", msg.conversation_id, reply, now)
        else:
            reply = {"kind": "availability", "task_id": p["task_id"], "station": state.station,
                     "available": False, "earliest_start": None, "resource": res}
            box.send(msg.sender, "refuse", msg.conversation_id, reply, now)
    elif msg.performative == "inform" and msg.kind == "requirements":
        alloc = p["allocation"]
        state.db.write(f"allocation/{alloc['task_id']}", alloc, now)
        for res in alloc["resources"]:
            box.send(state.directory.mra[res], "command", msg.conversation_id,
                     {"kind": "dispatch", "task": p["task"], "allocation": alloc}, now)
    else:
        return state.ignore(msg)
    return state.flush(box)


def _mra(state: MraState, msg: AgentMessage) -> list[AgentMessage]:
    box = state.outbox()
    now = msg.sent_at
    if msg.performative == "command" and msg.kind == "dispatch":
        task = msg.payload["task"]
        station = state.id.station
        state.current = task["task_id"]
        state.executed += 1
        box.send(state.directory.smona[station], "notify", msg.conversation_id,
                 {"kind": "started", "task_id": task["task_id"], "resource": state.resource}, now)
        box.send(state.directory.ami[station], "command", msg.conversation_id,
                 {"kind": "execute", "task": task, "resource": state.resource}, now)
    else:
        return state.ignore(msg)
    return state.flush(box)


def _ami(state: AmiState, msg: AgentMessage) -> list[AgentMessage]:
    box = state.outbox()
    if msg.performative == "command" and msg.kind == "execute":
        state.forwarded += 1
        box.send(state.directory.ha, "command", msg.conversation_id,
                 {"kind": "action", "task": msg.payload["task"], "resource": msg.payload["resource"]},
                 msg.sent_at)
    else:
        return state.ignore(msg)
    return state.flush(box)


_SMONA_STATUS = {"started": "busy", "completed": "idle", "failure": "down", "repair": "busy"}


def _smona(state: SmonaState, msg: AgentMessage) -> list[AgentMessage]:
    if msg.performative == "notify" and msg.kind in _SMONA_STATUS:
        p = msg.payload
        state.db.write(f"resource/{p['resource']}",
                       {"status": _SMONA_STATUS[msg.kind], "task_id": p["task_id"]}, msg.sent_at)
        return []
    return state.ignore(msg)


# -- shop monitoring and order management ---------------------------------------


def _smca(state: SmcaState, msg: AgentMessage) -> list[AgentMessage]:
    box = state.outbox()
    p = msg.payload
    now = msg.sent_at
    d = state.directory
    if msg.performative == "notify" and msg.kind in ("completed", "failure", "repair"):
        state.events += 1
        box.send(d.am, "notify", msg.conversation_id,
                 {"kind": msg.kind, "task_id": p["task_id"], "resource": p["resource"]}, now)
        if msg.kind == "completed" and p.get("action") == "move-s3":
            box.send(d.sma, "inform", f"order-{p['order_id']}",
                     {"kind": "order-complete", "order_id": p["order_id"]}, now)
    else:
        return state.ignore(msg)
    return state.flush(box)


def _sma(state: SmaState, msg: AgentMessage) -> list[AgentMessage]:
    box = state.outbox()
    p = msg.payload
    if msg.performative == "inform" and msg.kind == "order-released":
        state.orders[p["order_id"]] = "released"
        # task data for the order must be in the shop database before any task asks for it
        box.send(state.directory.dba_shop, "command", msg.conversation_id,
                 {"kind": "order-status", "order_id": p["order_id"], "status": "released",
                  "parts": p.get("parts", [])}, msg.sent_at)
    elif msg.performative == "inform" and msg.kind == "order-complete":
        state.orders[p["order_id"]] = "complete"
        box.send(state.directory.dba_shop, "command", msg.conversation_id,
                 {"kind": "order-status", "order_id": p["order_id"], "status": "complete"}, msg.sent_at)
    else:
        return state.ignore(msg)
    return state.flush(box)


HANDLERS = {
    "SMA": _sma,
    "AM": _am,
    "SMCA": _smca,
    "DBA-shop": _dba,
    "DBA-station": _dba,
    "SCA": _sca,
    "SMonA": _smona,
    "AMI": _ami,
    "MRA": _mra,
}


def handle_message(state: AgentState, msg: AgentMessage) -> tuple[AgentState, list[AgentMessage]]:
    if msg.receiver != state.id:
        raise ValueError(f"{msg.receiver} message delivered to {state.id}")
    return state, HANDLERS[state.id.role](state, msg)
