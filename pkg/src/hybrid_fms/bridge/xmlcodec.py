"""Canonical XML for the hybrid-agent channel.

Descriptor skeletons (MAS, AGENT, OBJECTS-LIST) follow the element names
used by the platform's description files. Leaf content is our own:

* ``ATTRIBUTES`` holds ``ATTRIBUTE NAME=...`` elements with one typed value
* ``CURRENT-STATE`` holds at most one ``STATE NAME=... TIME=...``
* ``ACTIONS`` / ``ACTIONS-LIST`` hold ``ACTION NAME=...`` with ``PARAM NAME=...``

Typed values are ``STR``, ``INT``, ``FLOAT``, ``BOOL``, ``NULL``, ``LIST`` and
``MAP`` (entries are ``ENTRY NAME=key``). Serialization never emits
whitespace between elements and never self-closes, so equal objects give
equal bytes.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union
from xml.parsers import expat

from ..mes.messages import AgentId, AgentMessage
from ..petri.net import SimEvent


class XmlError(ValueError):
    pass


class MalformedXml(XmlError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte {offset})")
        self.offset = offset


class UnknownElement(MalformedXml):
    pass


class MissingName(MalformedXml):
    pass


class UnserializablePayload(XmlError):
    pass


# -- protocol objects ---------------------------------------------------------


def _pairs(attrs) -> tuple:
    items = attrs.items() if isinstance(attrs, dict) else attrs
    return tuple(sorted((str(k), v) for k, v in items))


@dataclass(frozen=True)
class CurrentState:
    label: str
    time: int = 0


@dataclass(frozen=True)
class ActionSpec:
    name: str
    params: tuple[str, ...] = ()


@dataclass(frozen=True)
class AgentDescriptor:
    name: str
    attributes: tuple = ()
    state: Optional[CurrentState] = None
    actions: tuple[ActionSpec, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", _pairs(self.attributes))


@dataclass(frozen=True)
class ObjectDescriptor:
    name: str
    attributes: tuple = ()
    state: Optional[CurrentState] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", _pairs(self.attributes))


@dataclass(frozen=True)
class ObjectList:
    objects: tuple[ObjectDescriptor, ...] = ()


@dataclass(frozen=True)
class MasDescriptor:
    name: str
    agents: tuple[AgentDescriptor, ...] = ()
    objects: tuple[ObjectDescriptor, ...] = ()
    states: tuple[str, ...] = ()
    actions: tuple[ActionSpec, ...] = ()


@dataclass(frozen=True)
class ActionCommand:
    """Simulator-level instruction derived from an MES dispatch."""

    target: str
    action: str
    params: dict = field(default_factory=dict)
    issued_at: int = 0


@dataclass(frozen=True)
class StateUpdate:
    object: str
    state: str
    timestamp: int
    payload: Any = None


@dataclass(frozen=True)
class Sync:
    """Lock-step control frame. ``status`` is ``step`` from the hybrid
    agent and ``running``/``deadlock``/``horizon`` from the simulator."""

    name: str
    clock: int
    status: str


Message = Union[
    MasDescriptor, AgentDescriptor, ObjectList, AgentMessage, ActionCommand, StateUpdate, SimEvent, Sync
]

# -- writing -----------------------------------------------------------------

_BAD_CHARS = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff\ufffe\uffff]")
_TEXT_ESC = {"&": "&amp;", "<": "&lt;", ">": "&gt;", "\r": "&#13;"}
_ATTR_ESC = {**_TEXT_ESC, '"': "&quot;", "\t": "&#9;", "\n": "&#10;"}
_TEXT_RE = re.compile("[&<>\r]")
_ATTR_RE = re.compile('[&<>"\t\n\r]')


def _check_chars(s: str) -> str:
    if _BAD_CHARS.search(s):
        raise UnserializablePayload(f"character not representable in XML: {s!r}")
    return s


def _text(s: str) -> str:
    return _TEXT_RE.sub(lambda m: _TEXT_ESC[m.group()], _check_chars(s))


def _attr(s: Any) -> str:
    return _ATTR_RE.sub(lambda m: _ATTR_ESC[m.group()], _check_chars(str(s)))


def _el(tag: str, attrs: list[tuple[str, Any]], body: str = "") -> str:
    head = "".join(f' {k}="{_attr(v)}"' for k, v in attrs if v is not None)
    return f"<{tag}{head}>{body}</{tag}>"


def encode_value(v: Any) -> str:
    if v is None:
        return "<NULL></NULL>"
    if isinstance(v, bool):
        return f"<BOOL>{'true' if v else 'false'}</BOOL>"
    if isinstance(v, int):
        return f"<INT>{v}</INT>"
    if isinstance(v, float):
        if not math.isfinite(v):
            raise UnserializablePayload(f"non-finite float {v!r}")
        return f"<FLOAT>{v!r}</FLOAT>"
    if isinstance(v, str):
        return f"<STR>{_text(v)}</STR>"
    if isinstance(v, (list, tuple)):
        return "<LIST>" + "".join(encode_value(x) for x in v) + "</LIST>"
    if isinstance(v, dict):
        parts = []
        for k in sorted(v):
            if not isinstance(k, str) or not k:
                raise UnserializablePayload(f"map key {k!r} is not a non-empty string")
            parts.append(_el("ENTRY", [("NAME", k)], encode_value(v[k])))
        return "<MAP>" + "".join(parts) + "</MAP>"
    raise UnserializablePayload(f"cannot encode {type(v).__name__}")


def _attributes(pairs: tuple) -> str:
    return _el("ATTRIBUTES", [], "".join(_el("ATTRIBUTE", [("NAME", k)], encode_value(v)) for k, v in pairs))


def _current(state: Optional[CurrentState]) -> str:
    inner = "" if state is None else _el("STATE", [("NAME", state.label), ("TIME", state.time)])
    return _el("CURRENT-STATE", [], inner)


def _actions(tag: str, actions: tuple[ActionSpec, ...]) -> str:
    return _el(tag, [], "".join(
        _el("ACTION", [("NAME", a.name)], "".join(_el("PARAM", [("NAME", p)]) for p in a.params))
        for a in actions
    ))


def _agent(a: AgentDescriptor) -> str:
    return _el("AGENT", [("NAME", a.name)], _attributes(a.attributes) + _current(a.state) + _actions("ACTIONS", a.actions))


def _object(o: ObjectDescriptor) -> str:
    return _el("OBJECT", [("NAME", o.name)], _attributes(o.attributes) + _current(o.state))


def _write(m: Message) -> str:
    if isinstance(m, MasDescriptor):
        return _el("MAS", [("NAME", m.name)], "".join([
            _el("AGENTS-LIST", [], "".join(_agent(a) for a in m.agents)),
            _el("OBJECT-LIST", [], "".join(_object(o) for o in m.objects)),
            _el("STATES-LIST", [], "".join(_el("STATE", [("NAME", s)]) for s in m.states)),
            _actions("ACTIONS-LIST", m.actions),
        ]))
    if isinstance(m, AgentDescriptor):
        return _agent(m)
    if isinstance(m, ObjectList):
        return _el("OBJECTS-LIST", [], "".join(_object(o) for o in m.objects))
    if isinstance(m, AgentMessage):
        return _el("MESSAGE", [
            ("NAME", m.sender.name), ("RECEIVER", m.receiver.name), ("CONVERSATION", m.conversation_id),
            ("PERFORMATIVE", m.performative), ("SEQ", m.seq), ("SENT-AT", m.sent_at),
            ("IN-REPLY-TO", m.in_reply_to),
        ], _el("PAYLOAD", [], encode_value(m.payload)))
    if isinstance(m, ActionCommand):
        return _el("ACTION-COMMAND", [("NAME", m.target), ("ACTION", m.action), ("ISSUED-AT", m.issued_at)],
                   _el("PARAMS", [], encode_value(m.params)))
    if isinstance(m, StateUpdate):
        return _el("STATE-UPDATE", [("NAME", m.object), ("STATE", m.state), ("TIME", m.timestamp)],
                   _el("PAYLOAD", [], encode_value(m.payload)))
    if isinstance(m, SimEvent):
        return _el("SIM-EVENT", [
            ("NAME", f"event-{m.seq}"), ("KIND", m.kind), ("TIME", m.time), ("TRANSITION", m.transition_id),
            ("PRIORITY", m.priority), ("SEQ", m.seq),
        ], _el("PAYLOAD", [], encode_value(m.payload)))
    if isinstance(m, Sync):
        return _el("SYNC", [("NAME", m.name), ("CLOCK", m.clock), ("STATUS", m.status)])
    raise UnserializablePayload(f"no XML form for {type(m).__name__}")


def serialize(m: Message) -> bytes:
    return _write(m).encode("utf-8")


# -- reading -----------------------------------------------------------------


@dataclass
class Node:
    tag: str
    attrs: dict
    offset: int
    children: list["Node"] = field(default_factory=list)
    text: list[str] = field(default_factory=list)

    @property
    def content(self) -> str:
        return "".join(self.text)

    def need(self, key: str) -> str:
        if key not in self.attrs:
            if key == "NAME":
                raise MissingName(f"<{self.tag}> without NAME", self.offset)
            raise MalformedXml(f"<{self.tag}> without {key}", self.offset)
        v = self.attrs[key]
        if key == "NAME" and not v:
            raise MissingName(f"<{self.tag}> with empty NAME", self.offset)
        return v

    def int_attr(self, key: str) -> int:
        v = self.need(key)
        try:
            return int(v)
        except ValueError:
            raise MalformedXml(f"{key}={v!r} is not an integer", self.offset) from None

    def only(self, *tags: str) -> list["Node"]:
        for c in self.children:
            if c.tag not in tags:
                raise UnknownElement(f"<{c.tag}> not allowed inside <{self.tag}>", c.offset)
        return self.children

    def sections(self, *tags: str) -> list["Node"]:
        """Exactly the given child sections, in order."""
        got = [c.tag for c in self.children]
        if got != list(tags):
            off = self.children[0].offset if self.children else self.offset
            for c in self.children:
                if c.tag not in tags:
                    raise UnknownElement(f"<{c.tag}> not allowed inside <{self.tag}>", c.offset)
            raise MalformedXml(f"<{self.tag}> needs sections {list(tags)}, got {got}", off)
        return self.children


def parse_tree(data: bytes, known: frozenset[str]) -> Node:
    """Parse to a light tree; element names outside ``known`` are rejected."""
    p = expat.ParserCreate("UTF-8")
    p.ordered_attributes = False
    stack: list[Node] = []
    root: list[Node] = []

    def start(tag: str, attrs: dict) -> None:
        if tag not in known:
            raise UnknownElement(f"unknown element <{tag}>", p.CurrentByteIndex)
        n = Node(tag, attrs, p.CurrentByteIndex)
        if stack:
            stack[-1].children.append(n)
        else:
            root.append(n)
        stack.append(n)

    def end(tag: str) -> None:
        stack.pop()

    def chars(s: str) -> None:
        if stack:
            stack[-1].text.append(s)

    p.StartElementHandler = start
    p.EndElementHandler = end
    p.CharacterDataHandler = chars
    try:
        p.Parse(data, True)
    except expat.ExpatError as exc:
        raise MalformedXml(expat.ErrorString(exc.code), p.ErrorByteIndex) from None
    return root[0]


_VALUE_TAGS = frozenset({"STR", "INT", "FLOAT", "BOOL", "NULL", "LIST", "MAP", "ENTRY"})


def _no_text(n: Node) -> None:
    if n.content.strip():
        raise MalformedXml(f"unexpected text inside <{n.tag}>", n.offset)


def decode_value(n: Node) -> Any:
    if n.tag == "STR":
        if n.children:
            raise UnknownElement(f"<{n.children[0].tag}> inside <STR>", n.children[0].offset)
        return n.content
    if n.tag in ("INT", "FLOAT", "BOOL", "NULL"):
        n.only()
        s = n.content
        try:
            if n.tag == "INT":
                return int(s)
            if n.tag == "FLOAT":
                return float(s)
        except ValueError:
            raise MalformedXml(f"bad {n.tag} literal {s!r}", n.offset) from None
        if n.tag == "BOOL":
            if s not in ("true", "false"):
                raise MalformedXml(f"bad BOOL literal {s!r}", n.offset)
            return s == "true"
        _no_text(n)
        return None
    if n.tag == "LIST":
        _no_text(n)
        return [decode_value(c) for c in n.children]
    if n.tag == "MAP":
        _no_text(n)
        out = {}
        for e in n.only("ENTRY"):
            out[e.need("NAME")] = decode_value(_single(e))
        return out
    raise UnknownElement(f"<{n.tag}> is not a value", n.offset)


def _single(n: Node) -> Node:
    _no_text(n)
    if len(n.children) != 1:
        raise MalformedXml(f"<{n.tag}> needs exactly one child", n.offset)
    return n.children[0]


def _read_attributes(n: Node) -> tuple:
    _no_text(n)
    return tuple((a.need("NAME"), decode_value(_single(a))) for a in n.only("ATTRIBUTE"))


def _read_state(n: Node) -> Optional[CurrentState]:
    _no_text(n)
    kids = n.only("STATE")
    if not kids:
        return None
    if len(kids) > 1:
        raise MalformedXml("CURRENT-STATE holds a single STATE", kids[1].offset)
    return CurrentState(kids[0].need("NAME"), kids[0].int_attr("TIME"))


def _read_actions(n: Node) -> tuple[ActionSpec, ...]:
    _no_text(n)
    return tuple(
        ActionSpec(a.need("NAME"), tuple(p.need("NAME") for p in a.only("PARAM")))
        for a in n.only("ACTION")
    )


def _read_agent(n: Node) -> AgentDescriptor:
    _no_text(n)
    attrs, state, acts = n.sections("ATTRIBUTES", "CURRENT-STATE", "ACTIONS")
    return AgentDescriptor(n.need("NAME"), _read_attributes(attrs), _read_state(state), _read_actions(acts))


def _read_object(n: Node) -> ObjectDescriptor:
    _no_text(n)
    attrs, state = n.sections("ATTRIBUTES", "CURRENT-STATE")
    return ObjectDescriptor(n.need("NAME"), _read_attributes(attrs), _read_state(state))


def _payload(n: Node, tag: str = "PAYLOAD") -> Any:
    (p,) = n.sections(tag)
    return decode_value(_single(p))


def _opt_int(n: Node, key: str) -> Optional[int]:
    return n.int_attr(key) if key in n.attrs else None


def _agent_id(n: Node, key: str) -> AgentId:
    try:
        return AgentId.parse(n.need(key))
    except ValueError as exc:
        raise MalformedXml(str(exc), n.offset) from None


def _read_mas(n: Node) -> MasDescriptor:
    _no_text(n)
    agents, objects, states, actions = n.sections("AGENTS-LIST", "OBJECT-LIST", "STATES-LIST", "ACTIONS-LIST")
    for s in (agents, objects, states):
        _no_text(s)
    return MasDescriptor(
        n.need("NAME"),
        tuple(_read_agent(a) for a in agents.only("AGENT")),
        tuple(_read_object(o) for o in objects.only("OBJECT")),
        tuple(s.need("NAME") for s in states.only("STATE")),
        _read_actions(actions),
    )


def _read_message(n: Node) -> AgentMessage:
    try:
        return AgentMessage(
            n.need("CONVERSATION"), _agent_id(n, "NAME"), _agent_id(n, "RECEIVER"), n.need("PERFORMATIVE"),
            n.int_attr("SEQ"), _payload(n), n.int_attr("SENT-AT"), _opt_int(n, "IN-REPLY-TO"),
        )
    except ValueError as exc:
        if isinstance(exc, XmlError):
            raise
        raise MalformedXml(str(exc), n.offset) from None


def _read_objects(n: Node) -> ObjectList:
    _no_text(n)
    return ObjectList(tuple(_read_object(o) for o in n.only("OBJECT")))


def _read_command(n: Node) -> ActionCommand:
    return ActionCommand(n.need("NAME"), n.need("ACTION"), _payload(n, "PARAMS"), n.int_attr("ISSUED-AT"))


def _read_update(n: Node) -> StateUpdate:
    return StateUpdate(n.need("NAME"), n.need("STATE"), n.int_attr("TIME"), _payload(n))


def _read_event(n: Node) -> SimEvent:
    n.need("NAME")
    return SimEvent(n.int_attr("TIME"), n.need("KIND"), n.attrs.get("TRANSITION"), _payload(n),
                    n.int_attr("PRIORITY"), n.int_attr("SEQ"))


def _read_sync(n: Node) -> Sync:
    n.only()
    return Sync(n.need("NAME"), n.int_attr("CLOCK"), n.need("STATUS"))


_ROOTS: dict[str, Callable[[Node], Message]] = {
    "MAS": _read_mas,
    "AGENT": _read_agent,
    "OBJECTS-LIST": _read_objects,
    "MESSAGE": _read_message,
    "ACTION-COMMAND": _read_command,
    "STATE-UPDATE": _read_update,
    "SIM-EVENT": _read_event,
    "SYNC": _read_sync,
}

ELEMENTS = frozenset({
    "MAS", "AGENTS-LIST", "AGENT", "OBJECT-LIST", "OBJECTS-LIST", "OBJECT", "STATES-LIST", "STATE",
    "ACTIONS-LIST", "ACTIONS", "ACTION", "PARAM", "ATTRIBUTES", "ATTRIBUTE", "CURRENT-STATE",
    "MESSAGE", "PAYLOAD", "ACTION-COMMAND", "PARAMS", "STATE-UPDATE", "SIM-EVENT", "SYNC",
}) | _VALUE_TAGS


def parse(data: bytes) -> Message:
    root = parse_tree(data, ELEMENTS)
    reader = _ROOTS.get(root.tag)
    if reader is None:
        raise UnknownElement(f"<{root.tag}> is not a message root", root.offset)
    return reader(root)
