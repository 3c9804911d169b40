"""Net model documents in the same XML conventions as the channel.

::

    <NET NAME="...">
      <PLACES-LIST><PLACE NAME="p" CAPACITY="1"><COLOR-SET><KEY NAME="k"></KEY>...</COLOR-SET></PLACE>...</PLACES-LIST>
      <TRANSITIONS-LIST><TRANSITION NAME="t" PRIORITY="0" [PROBABILITY OTHERWISE TAG]>
        <GUARD>expr</GUARD><DELAY>expr</DELAY></TRANSITION>...</TRANSITIONS-LIST>
      <ARCS-LIST><ARC NAME="p/t" PLACE="p" TRANSITION="t" DIRECTION="in|out">expr</ARC>...</ARCS-LIST>
      [<MARKING CLOCK="0"><TOKEN NAME="p" TIME="0"><MAP>...</MAP></TOKEN>...</MARKING>]
    </NET>

Expressions: ``CONST`` (one typed value), ``VAR NAME``, ``FIELD NAME=var KEY``,
``EQ``/``NE`` (two operands), ``AND`` (any number), ``RECORD`` of ``ITEM NAME``.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

from ..petri.expr import And, Const, Eq, Expr, Field, Ne, Record, Var
from ..petri.net import Arc, Marking, NetModel, Place, Transition, make_marking
from .xmlcodec import _VALUE_TAGS, MalformedXml, Node, UnknownElement, _el, _no_text, _single, decode_value, encode_value, parse_tree

NET_ELEMENTS = frozenset({
    "NET", "PLACES-LIST", "PLACE", "COLOR-SET", "KEY", "TRANSITIONS-LIST", "TRANSITION", "GUARD", "DELAY",
    "ARCS-LIST", "ARC", "MARKING", "TOKEN", "CONST", "VAR", "FIELD", "EQ", "NE", "AND", "RECORD", "ITEM",
}) | _VALUE_TAGS


def write_expr(e: Expr) -> str:
    if isinstance(e, Const):
        return _el("CONST", [], encode_value(e.value))
    if isinstance(e, Var):
        return _el("VAR", [("NAME", e.name)])
    if isinstance(e, Field):
        return _el("FIELD", [("NAME", e.var), ("KEY", e.key)])
    if isinstance(e, (Eq, Ne)):
        return _el("EQ" if isinstance(e, Eq) else "NE", [], write_expr(e.left) + write_expr(e.right))
    if isinstance(e, And):
        return _el("AND", [], "".join(write_expr(t) for t in e.terms))
    if isinstance(e, Record):
        return _el("RECORD", [], "".join(_el("ITEM", [("NAME", k)], write_expr(v)) for k, v in e.fields))
    raise TypeError(f"not an expression: {e!r}")


def read_expr(n: Node) -> Expr:
    _no_text(n)
    if n.tag == "CONST":
        return Const(decode_value(_single(n)))
    if n.tag == "VAR":
        n.only()
        return Var(n.need("NAME"))
    if n.tag == "FIELD":
        n.only()
        return Field(n.need("NAME"), n.need("KEY"))
    if n.tag in ("EQ", "NE"):
        if len(n.children) != 2:
            raise MalformedXml(f"<{n.tag}> needs two operands", n.offset)
        left, right = (read_expr(c) for c in n.children)
        return Eq(left, right) if n.tag == "EQ" else Ne(left, right)
    if n.tag == "AND":
        return And(tuple(read_expr(c) for c in n.children))
    if n.tag == "RECORD":
        return Record(tuple((i.need("NAME"), read_expr(_single(i))) for i in n.only("ITEM")))
    raise UnknownElement(f"<{n.tag}> is not an expression", n.offset)


def _place(p: Place) -> str:
    keys = "".join(_el("KEY", [("NAME", k)]) for k in p.color_set)
    return _el("PLACE", [("NAME", p.id), ("CAPACITY", p.capacity)], _el("COLOR-SET", [], keys))


def _transition(t: Transition) -> str:
    attrs = [("NAME", t.id), ("PRIORITY", t.priority),
             ("PROBABILITY", None if t.probability is None else repr(t.probability)),
             ("OTHERWISE", t.otherwise), ("TAG", t.tag)]
    return _el("TRANSITION", attrs, _el("GUARD", [], write_expr(t.guard)) + _el("DELAY", [], write_expr(t.delay)))


def _arc(a: Arc) -> str:
    attrs = [("NAME", f"{a.place}/{a.transition}"), ("PLACE", a.place), ("TRANSITION", a.transition),
             ("DIRECTION", a.direction)]
    return _el("ARC", attrs, write_expr(a.expr))


def _marking(m: Marking) -> str:
    toks = []
    for place in sorted(m.tokens):
        for tok in m.tokens[place]:
            toks.append(_el("TOKEN", [("NAME", place), ("TIME", tok.timestamp)], encode_value(dict(tok.color))))
    return _el("MARKING", [("CLOCK", m.clock)], "".join(toks))


def dumps_net(net: NetModel, marking: Optional[Marking] = None) -> bytes:
    body = "".join([
        _el("PLACES-LIST", [], "".join(_place(p) for p in net.places)),
        _el("TRANSITIONS-LIST", [], "".join(_transition(t) for t in net.transitions)),
        _el("ARCS-LIST", [], "".join(_arc(a) for a in net.arcs)),
        _marking(marking) if marking is not None else "",
    ])
    return _el("NET", [("NAME", net.name)], body).encode("utf-8")


def _opt(n: Node, key: str, conv=str):
    if key not in n.attrs:
        return None
    try:
        return conv(n.attrs[key])
    except ValueError:
        raise MalformedXml(f"{key}={n.attrs[key]!r} is malformed", n.offset) from None


def loads_net(data: bytes) -> tuple[NetModel, Optional[Marking]]:
    root = parse_tree(data, NET_ELEMENTS)
    if root.tag != "NET":
        raise UnknownElement(f"expected <NET>, got <{root.tag}>", root.offset)
    _no_text(root)
    tags = [c.tag for c in root.children]
    has_marking = tags[-1:] == ["MARKING"]
    secs = root.sections("PLACES-LIST", "TRANSITIONS-LIST", "ARCS-LIST", *(["MARKING"] if has_marking else []))
    places = []
    for p in secs[0].only("PLACE"):
        (cs,) = p.sections("COLOR-SET")
        places.append(Place(p.need("NAME"), tuple(k.need("NAME") for k in cs.only("KEY")), _opt(p, "CAPACITY", int)))
    transitions = []
    for t in secs[1].only("TRANSITION"):
        guard, delay = t.sections("GUARD", "DELAY")
        transitions.append(Transition(
            t.need("NAME"), read_expr(_single(guard)), read_expr(_single(delay)),
            priority=t.int_attr("PRIORITY"), probability=_opt(t, "PROBABILITY", float),
            otherwise=_opt(t, "OTHERWISE"), tag=_opt(t, "TAG"),
        ))
    arcs = []
    for a in secs[2].only("ARC"):
        a.need("NAME")
        d = a.need("DIRECTION")
        if d not in ("in", "out"):
            raise MalformedXml(f"arc direction {d!r}", a.offset)
        arcs.append(Arc(a.need("PLACE"), a.need("TRANSITION"), d, read_expr(_single(a))))
    net = NetModel(tuple(places), tuple(transitions), tuple(arcs), name=root.need("NAME"))
    marking = None
    if has_marking:
        m = secs[3]
        init: dict[str, list] = {}
        for tok in m.only("TOKEN"):
            init.setdefault(tok.need("NAME"), []).append((decode_value(_single(tok)), tok.int_attr("TIME")))
        marking = make_marking(net, init, m.int_attr("CLOCK"))
    return net, marking


def save_net(path: str | Path, net: NetModel, marking: Optional[Marking] = None) -> None:
    Path(path).write_bytes(dumps_net(net, marking))


def load_net(path: str | Path) -> tuple[NetModel, Optional[Marking]]:
    return loads_net(Path(path).read_bytes())
