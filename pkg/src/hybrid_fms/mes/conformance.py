"""Replays conversation transcripts against the task start-up choreography
and the execution/notification automaton."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .messages import AgentMessage

# (sender role, receiver role, performative, kind) -> {phase: next phase}
_NEGOTIATION = {
    ("HA", "AM", "request", "task"): {"start": "announced"},
    ("AM", "DBA-shop", "query", "task-data"): {"announced": "db-query", "deferred": "db-query"},
    ("AM", "HA", "refuse", "no-data"): {"no-data": "deferred"},
    ("AM", "SCA", "query", "availability"): {"ready": "asking"},
    ("SCA", "AM", "refuse", "availability"): {"asking": "ready"},
    ("SCA", "AM", "propose", "availability"): {"asking": "offered"},
    ("AM", "DBA-shop", "accept", "allocation"): {"offered": "accepted"},
    ("DBA-shop", "SCA", "inform", "requirements"): {"accepted": "informed"},
    ("SCA", "MRA", "command", "dispatch"): {"informed": "dispatched"},
}

_ORDER = {
    ("HA", "SMA", "inform", "order-released"): {"start": "released"},
    ("SMA", "DBA-shop", "command", "order-status"): {"released": "registered", "complete": "recorded"},
    ("SMCA", "SMA", "inform", "order-complete"): {"registered": "complete"},
}

# simulator state updates the hybrid agent writes to station databases
_STATE = {
    ("HA", "DBA-station", "command", "write"): {"start": "start"},
}

# notification hops for one execution event, in causal order
_HOPS = (("HA", "SMonA"), ("HA", "SMCA"), ("SMCA", "AM"))


@dataclass
class _Conv:
    phase: str = "start"
    flags: set = field(default_factory=set)
    hops: dict = field(default_factory=lambda: defaultdict(int))


def cid_kind(cid: str) -> str:
    if cid.startswith("order-"):
        return "order"
    if cid.startswith("hsa-"):
        return "state"
    return "task"


def _table(cid: str) -> dict:
    return {"order": _ORDER, "state": _STATE, "task": _NEGOTIATION}[cid_kind(cid)]


def _key(m: AgentMessage) -> tuple:
    return (m.sender.role, m.receiver.role, m.performative, m.kind)


def _step_execution(c: _Conv, m: AgentMessage) -> str | None:
    k = _key(m)
    if k == ("MRA", "SMonA", "notify", "started"):
        if c.phase != "dispatched" or "started" in c.flags:
            return "started outside dispatch"
        c.flags.add("started")
        return None
    if k == ("MRA", "AMI", "command", "execute"):
        if c.phase != "dispatched" or "execute" in c.flags:
            return "execute outside dispatch"
        c.flags.add("execute")
        return None
    if k == ("AMI", "HA", "command", "action"):
        if "execute" not in c.flags or "action" in c.flags:
            return "action without execute"
        c.flags.add("action")
        return None
    if m.performative == "notify" and m.kind in ("failure", "repair", "completed"):
        hop = (m.sender.role, m.receiver.role)
        if hop not in _HOPS:
            return f"notify on unexpected hop {hop}"
        if "action" not in c.flags or c.hops[("completed", _HOPS[2])]:
            return f"{m.kind} notify outside execution"
        i = _HOPS.index(hop)
        n = c.hops[(m.kind, hop)] + 1
        if i > 0 and n > c.hops[(m.kind, _HOPS[i - 1])]:
            return f"{m.kind} notify skipped hop {_HOPS[i - 1]}"
        if m.kind == "repair" and n > c.hops[("failure", hop)]:
            return "repair without failure"
        if m.kind == "failure" and c.hops[("failure", hop)] != c.hops[("repair", hop)]:
            return "failure while already down"
        if m.kind == "completed" and (n > 1 or c.hops[("failure", hop)] != c.hops[("repair", hop)]):
            return "completion while down or repeated"
        c.hops[(m.kind, hop)] = n
        return None
    return f"unexpected message {k}"


def check_transcript(messages: Iterable[AgentMessage], require_complete: bool = False) -> list[str]:
    """Return violations; an empty list means the transcript conforms."""
    violations: list[str] = []
    convs: dict[str, _Conv] = {}
    last_seq: dict[str, int] = {}
    received: dict[tuple[str, str], set] = defaultdict(set)
    for idx, m in enumerate(messages):
        where = f"#{idx} {m.conversation_id} {m.sender}->{m.receiver} {m.performative}/{m.kind}"
        prev = last_seq.get(m.sender.name)
        if prev is not None and m.seq <= prev:
            violations.append(f"{where}: sender seq not increasing")
        last_seq[m.sender.name] = m.seq
        # replies may go to a third party (accept answers a proposal but goes to the DB)
        if m.in_reply_to is not None and m.in_reply_to not in received[(m.conversation_id, m.sender.name)]:
            violations.append(f"{where}: reply to unknown seq {m.in_reply_to}")
        received[(m.conversation_id, m.receiver.name)].add(m.seq)
        c = convs.setdefault(m.conversation_id, _Conv())
        k = _key(m)
        table = _table(m.conversation_id)
        if k in table:
            nxt = table[k].get(c.phase)
            if nxt is None:
                violations.append(f"{where}: not allowed in phase {c.phase}")
                continue
            c.phase = nxt
        elif k == ("DBA-shop", "AM", "inform", "task-data") and c.phase == "db-query":
            c.phase = "ready" if m.payload.get("found") else "no-data"
        elif table is _NEGOTIATION:
            err = _step_execution(c, m)
            if err:
                violations.append(f"{where}: {err}")
        else:
            violations.append(f"{where}: unexpected in {cid_kind(m.conversation_id)} conversation")
    if require_complete:
        for cid, c in convs.items():
            kind = cid_kind(cid)
            if kind == "order":
                if c.phase != "recorded":
                    violations.append(f"{cid}: order conversation ended in {c.phase}")
            elif kind == "task":
                if not c.hops[("completed", _HOPS[2])]:
                    violations.append(f"{cid}: task never completed (phase {c.phase})")
                missing = {"started", "execute", "action"} - c.flags
                if missing:
                    violations.append(f"{cid}: execution skipped {sorted(missing)}")
                if c.hops[("failure", _HOPS[2])] != c.hops[("repair", _HOPS[2])]:
                    violations.append(f"{cid}: failure never repaired")
    return violations
