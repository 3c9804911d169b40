"""Agent identities, the performative-typed message envelope and the task
payloads exchanged while starting a new task."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Optional

SHOP_ROLES = ("SMA", "AM", "SMCA", "DBA-shop")
STATION_ROLES = ("SCA", "SMonA", "AMI", "MRA", "DBA-station")
# the hybrid agent is the bridge endpoint; it speaks the same envelope
BRIDGE_ROLES = ("HA",)
ROLES = SHOP_ROLES + STATION_ROLES + BRIDGE_ROLES

PERFORMATIVES = ("request", "inform", "query", "propose", "accept", "refuse", "command", "notify")


class UnknownAgent(KeyError):
    pass


class MalformedTask(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AgentId:
    role: str
    instance: int = 0
    station: Optional[str] = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role in STATION_ROLES and not self.station:
            raise ValueError(f"{self.role} requires a station id")
        if self.role not in STATION_ROLES and self.station:
            raise ValueError(f"{self.role} is a shop-level role and takes no station")

    # identity is the name; comparing it is much cheaper than the field tuple
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AgentId):
            return NotImplemented
        return self is other or self.name == other.name

    def __hash__(self) -> int:
        return hash(self.name)

    @cached_property
    def name(self) -> str:
        base = f"{self.role}.{self.instance}"
        return f"{base}@{self.station}" if self.station else base

    @classmethod
    def parse(cls, name: str) -> "AgentId":
        station = None
        if "@" in name:
            name, station = name.split("@", 1)
        role, _, inst = name.rpartition(".")
        if not role:
            raise ValueError(f"bad agent name {name!r}")
        return cls(role, int(inst), station)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class AgentMessage:
    conversation_id: str
    sender: AgentId
    receiver: AgentId
    performative: str
    seq: int
    payload: Any
    sent_at: int
    in_reply_to: Optional[int] = None

    def __post_init__(self) -> None:
        if self.performative not in PERFORMATIVES:
            raise ValueError(f"unknown performative {self.performative!r}")

    @property
    def kind(self) -> str:
        return self.payload.get("kind", "") if isinstance(self.payload, dict) else ""

    def order_key(self) -> tuple:
        return (self.sent_at, self.seq, self.sender.name)

    def to_record(self) -> dict:
        return {
            "conversation": self.conversation_id,
            "sender": self.sender.name,
            "receiver": self.receiver.name,
            "performative": self.performative,
            "seq": self.seq,
            "in_reply_to": self.in_reply_to,
            "sent_at": self.sent_at,
            "payload": self.payload,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AgentMessage":
        return cls(
            rec["conversation"],
            AgentId.parse(rec["sender"]),
            AgentId.parse(rec["receiver"]),
            rec["performative"],
            rec["seq"],
            rec["payload"],
            rec["sent_at"],
            rec["in_reply_to"],
        )


@dataclass(frozen=True)
class TaskAnnouncement:
    task_id: str
    order_id: int
    required_capabilities: tuple[str, ...]
    action: str
    part_id: int = -1
    deadline: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.required_capabilities:
            raise MalformedTask(f"task {self.task_id} needs at least one capability")

    def to_payload(self) -> dict:
        return {
            "task_id": self.task_id,
            "order_id": self.order_id,
            "required_capabilities": list(self.required_capabilities),
            "action": self.action,
            "part_id": self.part_id,
            "deadline": self.deadline,
        }

    @classmethod
    def from_payload(cls, d: dict) -> "TaskAnnouncement":
        try:
            return cls(
                d["task_id"],
                d["order_id"],
                tuple(d["required_capabilities"]),
                d["action"],
                d.get("part_id", -1),
                d.get("deadline"),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedTask(str(exc)) from exc


@dataclass(frozen=True)
class AvailabilityReply:
    task_id: str
    station: str
    available: bool
    earliest_start: Optional[int] = None
    resource: Optional[str] = None

    def __post_init__(self) -> None:
        if self.available and self.earliest_start is None:
            raise ValueError("available replies carry earliest_start")
        if not self.available and self.earliest_start is not None:
            raise ValueError("earliest_start is only present when available")


@dataclass
class Outbox:
    """Collects outgoing messages for one sender, stamping per-sender seq."""

    sender: AgentId
    next_seq: int = 0
    sent: list[AgentMessage] = field(default_factory=list)

    def send(
        self,
        receiver: AgentId,
        performative: str,
        conversation: str,
        payload: Any,
        now: int,
        in_reply_to: Optional[int] = None,
    ) -> AgentMessage:
        msg = AgentMessage(conversation, self.sender, receiver, performative, self.next_seq, payload, now, in_reply_to)
        self.next_seq += 1
        self.sent.append(msg)
        return msg
