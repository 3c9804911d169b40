import re
import socket
import struct
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_fms.bridge import (
    ActionCommand,
    ActionSpec,
    AgentDescriptor,
    BrokenStream,
    CurrentState,
    Deframer,
    FramedSocket,
    MalformedXml,
    MasDescriptor,
    MissingName,
    Notification,
    ObjectDescriptor,
    ObjectList,
    OversizeFrame,
    StateUpdate,
    Sync,
    UnknownElement,
    UnknownObject,
    UnserializablePayload,
    audit,
    deframe,
    dumps_net,
    frame,
    loads_net,
    parse,
    serialize,
    serve_and_connect,
    translate_decision,
    translate_event,
)
from hybrid_fms.fms import FmsConfig, build_fms_net, initial_marking, release_orders
from hybrid_fms.mes import AgentId, AgentMessage, DivergenceError
from hybrid_fms.mes.conformance import check_transcript
from hybrid_fms.petri import Simulator
from hybrid_fms.petri.net import SimEvent
from hybrid_fms.harness.scenario import run_agents

FIXTURES = Path(__file__).parent / "fixtures"

MAS = MasDescriptor(
    "RFIDMAS",
    agents=(AgentDescriptor("HA", {"role": "hybrid"}, CurrentState("idle", 0), (ActionSpec("translate", ("decision",)),)),
            AgentDescriptor("SMA")),
    objects=(ObjectDescriptor("ASRS", {"station": "station3"}),
             ObjectDescriptor("CNC", {"cycle_ms": 10000}, CurrentState("idle", 0))),
    states=("idle", "busy"),
    actions=(ActionSpec("start-machining", ("order", "part")),),
)
SMA = AgentDescriptor("SMA", {"orders": [0, 1], "level": "shop"}, CurrentState("monitoring", 8000),
                      (ActionSpec("register-order", ("order_id", "parts")),))
OBJS = ObjectList((ObjectDescriptor("ASRS", {"station": "station3", "capacity": None}, CurrentState("stored", 101000)),
                   ObjectDescriptor("robot", {"speed": 0.5})))


@pytest.mark.parametrize("name,msg", [("mas_rfidmas.xml", MAS), ("agent_sma.xml", SMA), ("objects_asrs.xml", OBJS)])
def test_golden_fixtures(name, msg):
    data = (FIXTURES / name).read_bytes()
    assert parse(data) == msg
    assert serialize(msg) == data.rstrip(b"\n")


# -- round trips ------------------------------------------------------------

_XML_BAD = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff￾￿]")
text = st.text(max_size=12).filter(lambda s: not _XML_BAD.search(s))
keys = text.filter(bool)
names = st.text("abcdefghijklmnopqrstuvwxyz-_.0123456789", min_size=1, max_size=10)
scalars = st.one_of(st.none(), st.booleans(), st.integers(-2**70, 2**70),
                    st.floats(allow_nan=False, allow_infinity=False), text)
values = st.recursive(scalars, lambda inner: st.one_of(st.lists(inner, max_size=4),
                                                       st.dictionaries(keys, inner, max_size=4)), max_leaves=12)

agent_ids = st.one_of(
    st.builds(AgentId, st.sampled_from(["SMA", "AM", "SMCA", "DBA-shop", "HA"])),
    st.builds(AgentId, st.sampled_from(["SCA", "SMonA", "AMI", "MRA", "DBA-station"]), st.integers(0, 9), names),
)
messages = st.builds(
    AgentMessage, text, agent_ids, agent_ids,
    st.sampled_from(["request", "inform", "query", "propose", "accept", "refuse", "command", "notify"]),
    st.integers(0, 10**9), st.dictionaries(keys, values, max_size=4), st.integers(0, 10**12),
    st.one_of(st.none(), st.integers(0, 10**6)),
)
others = st.one_of(
    st.builds(ActionCommand, names, names, st.dictionaries(keys, values, max_size=3), st.integers(0, 10**9)),
    st.builds(StateUpdate, names, names, st.integers(0, 10**9), values),
    st.builds(Sync, st.sampled_from(["ha", "hsa"]), st.integers(-1, 10**9), names),
    st.builds(SimEvent, st.integers(0, 10**9), st.sampled_from(["fire", "failure", "repair", "deadlock"]),
              st.one_of(st.none(), names), st.dictionaries(keys, values, max_size=3),
              st.integers(-5, 5), st.integers(0, 10**6)),
)


@settings(max_examples=200)
@given(messages)
def test_agent_message_round_trip(m):
    assert parse(serialize(m)) == m


@settings(max_examples=150)
@given(others)
def test_other_messages_round_trip(m):
    assert parse(serialize(m)) == m


@pytest.mark.parametrize("doc,exc", [
    (b"<SYNC NAME='ha' CLOCK='1'", MalformedXml),
    (b"<SYNC CLOCK='1' STATUS='step'></SYNC>", MissingName),
    (b"<BANANA NAME='x'></BANANA>", UnknownElement),
    (b"<STATE-UPDATE NAME='cnc' STATE='x' TIMESTAMP='1'><PAYLOAD><INT>z</INT></PAYLOAD></STATE-UPDATE>", MalformedXml),
])
def test_malformed_documents(doc, exc):
    with pytest.raises(exc) as info:
        parse(doc)
    assert info.value.offset >= 0


def test_truncation_reports_offset():
    data = serialize(Sync("ha", 5, "step"))
    with pytest.raises(MalformedXml) as info:
        parse(data[:-3])
    assert 0 < info.value.offset <= len(data)


@pytest.mark.parametrize("payload", [{"x": float("nan")}, {"x": object()}, {1: 2}, {"": 1}, {"x": "\x01"}])
def test_unserializable_payloads(payload):
    with pytest.raises(UnserializablePayload):
        serialize(StateUpdate("cnc", "busy", 0, payload))


# -- framing ----------------------------------------------------------------


@settings(max_examples=100)
@given(st.lists(st.binary(max_size=300), max_size=6), st.data())
def test_deframe_any_split(payloads, data):
    stream = b"".join(frame(p) for p in payloads)
    cuts = sorted(data.draw(st.lists(st.integers(0, len(stream)), max_size=8)))
    chunks = [stream[a:b] for a, b in zip([0] + cuts, cuts + [len(stream)])]
    assert deframe(chunks) == payloads


def test_frame_limits_and_broken_stream():
    with pytest.raises(OversizeFrame):
        frame(b"x" * 11, limit=10)
    with pytest.raises(OversizeFrame):
        Deframer(limit=10).feed(struct.pack(">I", 11))
    d = Deframer()
    assert d.feed(frame(b"hello")[:6]) == [] and d.pending == 6
    with pytest.raises(BrokenStream):
        d.close()


def test_framed_socket_pair():
    a, b = socket.socketpair()
    fa, fb = FramedSocket(a), FramedSocket(b)
    fa.send(b"one")
    fa.send(b"")
    fa.send(b"three")
    assert [fb.recv(), fb.recv(), fb.recv()] == [b"one", b"", b"three"]
    fa.close()
    with pytest.raises(BrokenStream):
        fb.recv()
    fb.close()


# -- translation ------------------------------------------------------------


def decision(action, res, part=0):
    return {"task": {"task_id": f"{action}/o2/p{part}", "order_id": 2, "part_id": part, "action": action},
            "resource": res}


def test_decision_translation():
    cmd = translate_decision(decision("machine", "cnc"), issued_at=7)
    assert (cmd.target, cmd.action, cmd.issued_at) == ("CNC", "start-machining", 7)
    assert cmd.params == {"task_id": "machine/o2/p0", "route_action": "machine", "order": 2, "part": 0}
    assert translate_decision(decision("assemble", "glue-assembly", -1)).target == "glue-assembly"
    assert translate_decision(decision("move-s1", "robot")).action == "start-transport"
    with pytest.raises(UnknownObject):
        translate_decision(decision("machine", "lathe"))
    with pytest.raises(UnknownObject):
        translate_decision(decision("polish", "cnc"))


def binding(**color):
    return {"binding": [{"color": color, "ts": 0}], "delay": 0}


def test_event_translation():
    done = translate_event(SimEvent(40, "fire", "cnc_end", binding(res="cnc", order=1, part=4)))
    assert done == Notification("completed", "machine", "cnc", 1, 4, 40)
    fail = translate_event(SimEvent(9, "failure", "cnc_fail", binding(res="cnc", order=1, part=4)))
    assert fail.kind == "failure"
    # moves that finish nothing only update state
    upd = translate_event(SimEvent(3, "fire", "move_s2", binding(res="conveyor", order=0, part=1)))
    assert isinstance(upd, StateUpdate) and upd.object == "conveyor" and upd.state == "move_s2"
    dl = translate_event(SimEvent(5, "deadlock", None, {}))
    assert isinstance(dl, StateUpdate) and dl.state == "deadlock"


# -- coupling ---------------------------------------------------------------


def test_no_orders_quiesces_immediately():
    trace, _ = run_agents(FmsConfig(order_count=0))
    assert trace.outcome == "complete" and trace.completions == {}


@pytest.mark.parametrize("policy,expected", [("sequential", 101_000), ("pipelined", 69_000)])
def test_single_order_completion(policy, expected):
    trace, mas = run_agents(FmsConfig(order_count=1), policy=policy)
    assert trace.completions == {0: expected}
    assert audit(trace) == []
    assert check_transcript(trace.messages, require_complete=True) == []


def test_two_orders_in_release_order():
    trace, mas = run_agents(FmsConfig(order_count=2))
    assert trace.completions[0] < trace.completions[1]
    assert mas.am.calendar.overlaps() == []


def test_same_seed_same_joint_trace():
    cfg = FmsConfig(order_count=4, seed=3).with_failure(0.3)
    assert run_agents(cfg)[0].to_lines() == run_agents(cfg)[0].to_lines()


def test_socket_transport_matches_in_process():
    cfg = FmsConfig(order_count=3).with_failure(0.2)
    local, _ = run_agents(cfg)
    net = build_fms_net(cfg)
    server, remote = serve_and_connect(Simulator(net, initial_marking(cfg, net, release_orders(cfg)), seed=cfg.seed))
    try:
        remote_trace, _ = run_agents(cfg, endpoint=remote)
    finally:
        remote.close()
        server.join(5)
    assert server.error is None
    assert remote_trace.to_lines() == local.to_lines()


def test_message_budget_surfaces_as_divergence():
    from hybrid_fms.bridge import HybridAgent, LocalEndpoint, step_coupled
    from hybrid_fms.mes import MesSystem

    cfg = FmsConfig(order_count=2)
    orders = release_orders(cfg)
    net = build_fms_net(cfg)
    mas = MesSystem(cfg, budget=5)
    with pytest.raises(DivergenceError):
        step_coupled(LocalEndpoint(Simulator(net, initial_marking(cfg, net, orders))), mas, HybridAgent(mas, orders))


def test_net_model_xml_round_trip():
    cfg = FmsConfig(order_count=2).with_failure()
    net = build_fms_net(cfg)
    m0 = initial_marking(cfg, net, release_orders(cfg))
    back, marking = loads_net(dumps_net(net, m0))
    assert back == net and marking == m0 and marking.clock == m0.clock
    assert loads_net(dumps_net(net)) == (net, None)
