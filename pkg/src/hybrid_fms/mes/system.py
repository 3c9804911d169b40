"""Wiring of the agent population and the global message dispatcher."""
from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from ..fms.model import STATIONS, FmsConfig
from .agents import (
    POLICIES,
    AgentState,
    AmiState,
    AmState,
    DbaState,
    Directory,
    MraState,
    ScaState,
    SmaState,
    SmcaState,
    SmonaState,
    handle_message,
)
from .calendar import Allocation
from .database import Database
from .messages import AgentId, AgentMessage, Outbox, TaskAnnouncement, UnknownAgent
from .ontology import CapabilityRecord, default_capabilities

MESSAGE_BUDGET = 10_000


class DivergenceError(RuntimeError):
    """The agent layer did not quiesce or referenced unknown state."""


class MesSystem:
    """All agents of the execution layer plus a dispatcher that delivers
    messages in total order (delivery time, sender seq, sender id)."""

    def __init__(
        self,
        cfg: FmsConfig,
        policy: str = "pipelined",
        s1_limit: int = 3,
        records: Optional[list[CapabilityRecord]] = None,
        budget: int = MESSAGE_BUDGET,
    ):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.records = records if records is not None else default_capabilities(cfg)
        resources = sorted({r.resource for r in self.records})
        self.directory = d = Directory.build(resources)
        self.shop_db = Database("shop")
        self.station_db = {s: Database(f"station:{s}") for s in STATIONS}
        self.agents: dict[AgentId, AgentState] = {
            d.sma: SmaState(d.sma, d),
            d.am: AmState(d.am, d, records=list(self.records), policy=policy, s1_limit=s1_limit),
            d.smca: SmcaState(d.smca, d),
            d.dba_shop: DbaState(d.dba_shop, d, db=self.shop_db),
        }
        for s in STATIONS:
            db = self.station_db[s]
            self.agents[d.sca[s]] = ScaState(d.sca[s], d, station=s, db=db)
            self.agents[d.smona[s]] = SmonaState(d.smona[s], d, db=db)
            self.agents[d.ami[s]] = AmiState(d.ami[s], d)
            self.agents[d.dba_station[s]] = DbaState(d.dba_station[s], d, db=db)
        for res, aid in d.mra.items():
            self.agents[aid] = MraState(aid, d, resource=res)
        self.ha_box = Outbox(d.ha)
        self.budget = budget
        self._heap: list = []
        self._tie = itertools.count()
        self._instant: Optional[int] = None
        self._instant_count = 0
        self.transcript: list[AgentMessage] = []
        self.to_ha: list[AgentMessage] = []

    @property
    def am(self) -> AmState:
        return self.agents[self.directory.am]  # type: ignore[return-value]

    def post(self, msg: AgentMessage) -> None:
        if msg.receiver != self.directory.ha and msg.receiver not in self.agents:
            raise UnknownAgent(msg.receiver.name)
        heapq.heappush(self._heap, (msg.sent_at, msg.seq, msg.sender.name, next(self._tie), msg))

    def send_from_ha(self, receiver: AgentId, performative: str, conversation: str, payload: Any, now: int) -> AgentMessage:
        msg = self.ha_box.send(receiver, performative, conversation, payload, now)
        self.ha_box.sent.clear()
        self.post(msg)
        return msg

    def pending(self) -> bool:
        return bool(self._heap)

    def next_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def drain(self, now: int) -> list[AgentMessage]:
        """Deliver every message due at or before ``now`` until quiescent.
        Returns the messages addressed to the hybrid agent."""
        out: list[AgentMessage] = []
        while self._heap and self._heap[0][0] <= now:
            msg: AgentMessage = heapq.heappop(self._heap)[-1]
            if msg.sent_at != self._instant:
                self._instant, self._instant_count = msg.sent_at, 0
            self._instant_count += 1
            if self._instant_count > self.budget:
                raise DivergenceError(f"message budget {self.budget} exceeded at t={msg.sent_at}")
            self.transcript.append(msg)
            if msg.receiver.role == "HA":
                self.to_ha.append(msg)
                out.append(msg)
                continue
            state = self.agents.get(msg.receiver)
            if state is None:
                raise UnknownAgent(msg.receiver.name)
            _, outgoing = handle_message(state, msg)
            for m in outgoing:
                self.post(m)
        return out

    def conversation(self, cid: str) -> list[AgentMessage]:
        return [m for m in self.transcript if m.conversation_id == cid]

    def transcript_lines(self) -> bytes:
        return transcript_lines(self.transcript)


def transcript_lines(messages: Iterable[AgentMessage]) -> bytes:
    return b"".join(
        json.dumps(m.to_record(), sort_keys=True, separators=(",", ":")).encode() + b"\n" for m in messages
    )


def read_transcript(data: bytes) -> list[AgentMessage]:
    return [AgentMessage.from_record(json.loads(line)) for line in data.splitlines() if line.strip()]


@dataclass
class StartResult:
    transcript: list[AgentMessage]
    allocation: Optional[Allocation]
    deferred: bool
    execution: list[AgentMessage]


def register_order(system: MesSystem, order_id: int, now: int = 0, parts: Optional[list[dict]] = None) -> None:
    """Order data the shop database needs before tasks of that order can start."""
    system.shop_db.write(f"order/{order_id}", {"status": "released", "parts": parts or []}, now)


def start_new_task(system: MesSystem, task: TaskAnnouncement, now: int = 0) -> StartResult:
    """Deliver ``task`` from the hybrid agent and run the agents to quiescence.

    The returned transcript covers the start-up choreography up to the
    station agent's dispatch to its sub-agents; later messages of the same
    conversation are returned as ``execution``.
    """
    before = len(system.transcript)
    system.send_from_ha(system.directory.am, "request", task.task_id, {"kind": "task", "task": task.to_payload()}, now)
    system.drain(now)
    conv = [m for m in system.transcript[before:] if m.conversation_id == task.task_id]
    cut = next((i + 1 for i, m in enumerate(conv) if m.kind == "dispatch"), len(conv))
    alloc = system.am.allocations.get(task.task_id)
    return StartResult(conv[:cut], alloc, alloc is None, conv[cut:])
