import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_fms.fms import FmsConfig
from hybrid_fms.mes import (
    AgentId,
    AgentMessage,
    AvailabilityReply,
    Database,
    DivergenceError,
    MalformedTask,
    MesSystem,
    NoCapableStation,
    OverlapConflict,
    ResourceCalendar,
    TaskAnnouncement,
    UnknownAgent,
    allocate,
    default_capabilities,
    fifo_interval,
    match_capability,
    query_database,
    register_order,
    start_new_task,
    write_database,
)
from hybrid_fms.mes.conformance import check_transcript
from hybrid_fms.mes.ontology import CapabilityRecord
from hybrid_fms.mes.system import read_transcript, transcript_lines
from hybrid_fms.harness.scenario import run_agents

STARTUP = [
    ("HA", "AM", "request", "task"),
    ("AM", "DBA-shop", "query", "task-data"),
    ("DBA-shop", "AM", "inform", "task-data"),
    ("AM", "SCA", "query", "availability"),
    ("SCA", "AM", "propose", "availability"),
    ("AM", "DBA-shop", "accept", "allocation"),
    ("DBA-shop", "SCA", "inform", "requirements"),
    ("SCA", "MRA", "command", "dispatch"),
]
EXECUTION = [("MRA", "SMonA", "notify", "started"), ("MRA", "AMI", "command", "execute"), ("AMI", "HA", "command", "action")]


def shape(msgs):
    return [(m.sender.role, m.receiver.role, m.performative, m.kind) for m in msgs]


def machine_task(order=0, part=0):
    return TaskAnnouncement(f"machine/o{order}/p{part}", order, ("milling",), "machine", part)


def test_startup_choreography():
    s = MesSystem(FmsConfig(order_count=1))
    register_order(s, 0)
    r = start_new_task(s, machine_task(), now=10)
    assert shape(r.transcript) == STARTUP
    assert shape(r.execution) == EXECUTION
    assert not r.deferred
    assert (r.allocation.station, r.allocation.resources, r.allocation.start, r.allocation.end) == (
        "station1-machining", ("cnc",), 10, 10_010)
    assert check_transcript(s.transcript) == []


def test_task_without_order_data_is_deferred_then_retried():
    s = MesSystem(FmsConfig(order_count=1))
    r = start_new_task(s, machine_task(), now=0)
    assert r.deferred and r.allocation is None
    assert shape(r.transcript)[-1] == ("AM", "HA", "refuse", "no-data")
    s.send_from_ha(s.directory.sma, "inform", "order-0",
                   {"kind": "order-released", "order_id": 0, "parts": []}, 5)
    s.drain(5)
    assert s.shop_db.query("order/0") is not None
    # deferred tasks are retried on the next completion; a fresh request goes straight through
    assert s.am.no_data == ["machine/o0/p0"]
    again = start_new_task(s, machine_task(0, 1), now=6)
    assert again.allocation is not None and again.allocation.start == 6
    assert check_transcript(s.transcript) == []


def test_second_task_queues_while_resource_held():
    s = MesSystem(FmsConfig(order_count=2))
    register_order(s, 0)
    register_order(s, 1)
    a = start_new_task(s, machine_task(0, 0), now=0)
    b = start_new_task(s, machine_task(1, 3), now=0)
    assert a.allocation is not None and b.allocation is None
    # the station refuses while its cnc is busy; the task goes back to the AM queue
    assert shape(b.transcript) == STARTUP[:4] + [("SCA", "AM", "refuse", "availability")]
    assert len(s.am.calendar.intervals["cnc"]) == 1


def test_unknown_receiver_rejected():
    s = MesSystem(FmsConfig(order_count=1))
    with pytest.raises(UnknownAgent):
        s.send_from_ha(AgentId("MRA", 7, "station2-assembly"), "command", "x", {"kind": "dispatch"}, 0)


def test_message_budget_turns_livelock_into_error():
    s = MesSystem(FmsConfig(order_count=1), budget=3)
    register_order(s, 0)
    with pytest.raises(DivergenceError):
        start_new_task(s, machine_task(), now=0)


def test_delivery_total_order():
    s = MesSystem(FmsConfig(order_count=0))
    ha = s.directory.ha
    msgs = [
        AgentMessage("c", AgentId("SMA"), ha, "inform", 4, {}, 10),
        AgentMessage("c", AgentId("AM"), ha, "inform", 9, {}, 5),
        AgentMessage("c", AgentId("SMCA"), ha, "inform", 1, {}, 10),
        AgentMessage("c", AgentId("AM"), ha, "inform", 1, {}, 10),
    ]
    for m in msgs:
        s.post(m)
    got = s.drain(10)
    assert [(m.sent_at, m.seq, m.sender.name) for m in got] == [
        (5, 9, "AM.0"), (10, 1, "AM.0"), (10, 1, "SMCA.0"), (10, 4, "SMA.0")]


def test_drain_leaves_future_messages():
    s = MesSystem(FmsConfig(order_count=0))
    s.post(AgentMessage("c", AgentId("SMA"), s.directory.ha, "inform", 0, {}, 50))
    assert s.drain(49) == [] and s.next_time() == 50


# -- databases --------------------------------------------------------------


def test_database_last_writer_wins():
    db = Database("t")
    assert write_database(db, "k", "a", time=5).applied
    assert write_database(db, "k", "b", time=5).applied  # later arrival, same instant
    assert not write_database(db, "k", "old", time=3).applied
    assert query_database(db, "k").value == "b"
    assert query_database(db, "missing") is None
    assert len(db.journal) == 3 and db.journal_lines().count(b"\n") == 3


@settings(max_examples=80)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3)), min_size=1, max_size=30))
def test_database_value_is_max_stamp(writes):
    db = Database("t")
    for i, (t, v) in enumerate(writes):
        db.write("k", (t, i, v), t)
    best = max(range(len(writes)), key=lambda i: (writes[i][0], i))
    assert db.query("k").value == (writes[best][0], best, writes[best][1])


# -- calendars --------------------------------------------------------------


def test_calendar_fifo_and_overlap():
    cal = ResourceCalendar()
    allocate(cal, "t1", "station1-machining", ("cnc",), (0, 10))
    assert fifo_interval(cal, "cnc", 3, 10) == (10, 20)
    with pytest.raises(OverlapConflict):
        allocate(cal, "t2", "station1-machining", ("cnc", "robot"), (5, 12))
    assert "robot" not in cal.intervals or cal.intervals["robot"] == []
    allocate(cal, "t3", "station1-machining", ("cnc",), (10, 10))  # zero length never collides
    cal.close("cnc", "t1", 8)
    assert cal.intervals["cnc"][0] == [0, 8, "t1"]
    assert cal.overlaps() == []


@settings(max_examples=80)
@given(st.lists(st.tuples(st.integers(0, 100), st.integers(0, 20)), max_size=25))
def test_calendar_never_double_books(requests):
    cal = ResourceCalendar()
    for i, (start, length) in enumerate(requests):
        try:
            cal.commit("r", start, start + length, f"t{i}")
        except OverlapConflict:
            pass
    ivs = cal.intervals.get("r", [])
    assert [iv[0] for iv in ivs] == sorted(iv[0] for iv in ivs)
    assert cal.overlaps() == []


# -- ontology and messages --------------------------------------------------


def test_capability_matching():
    recs = default_capabilities(FmsConfig())
    assert match_capability(("milling",), recs) == ["station1-machining"]
    assert match_capability(("transport",), recs, {"station3-asrs": 0, "station1-machining": 5}) == [
        "station3-asrs", "station1-machining"]
    with pytest.raises(NoCapableStation):
        match_capability(("welding",), recs)
    extra = recs + [CapabilityRecord("laser-qc", "milling")]
    assert match_capability(("milling",), extra) == ["station1-machining", "station2-assembly"]


roles = st.sampled_from(["SMA", "AM", "SMCA", "DBA-shop", "HA"])
station_roles = st.sampled_from(["SCA", "SMonA", "AMI", "MRA", "DBA-station"])
agent_ids = st.one_of(
    st.builds(AgentId, roles),
    st.builds(AgentId, station_roles, st.integers(0, 5), st.sampled_from(["station1-machining", "station3-asrs"])),
)


@given(agent_ids)
def test_agent_name_round_trip(aid):
    back = AgentId.parse(aid.name)
    assert back == aid and hash(back) == hash(aid)


def test_agent_id_validation():
    with pytest.raises(ValueError):
        AgentId("Boss")
    with pytest.raises(ValueError):
        AgentId("SCA")
    with pytest.raises(ValueError):
        AgentId("SMA", 0, "station1-machining")
    with pytest.raises(ValueError):
        AgentMessage("c", AgentId("SMA"), AgentId("AM"), "shout", 0, {}, 0)


def test_task_payload_round_trip_and_errors():
    t = TaskAnnouncement("assemble/o4", 4, ("assembly",), "assemble", deadline=99)
    assert TaskAnnouncement.from_payload(t.to_payload()) == t
    with pytest.raises(MalformedTask):
        TaskAnnouncement.from_payload({"task_id": "x"})
    with pytest.raises(MalformedTask):
        TaskAnnouncement("x", 0, (), "machine")
    with pytest.raises(ValueError):
        AvailabilityReply("x", "station1-machining", True)


# -- transcripts ------------------------------------------------------------


@pytest.fixture(scope="module")
def small_run():
    trace, mas = run_agents(FmsConfig(order_count=3).with_failure(0.5))
    assert trace.outcome == "complete"
    return trace.messages


def test_full_run_conforms(small_run):
    assert check_transcript(small_run, require_complete=True) == []
    assert any(m.kind == "failure" for m in small_run)


def test_transcript_lines_round_trip(small_run):
    assert read_transcript(transcript_lines(small_run)) == small_run


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_dropping_a_task_message_is_detected(small_run, data):
    idx = [i for i, m in enumerate(small_run) if not m.conversation_id.startswith("hsa-")]
    i = data.draw(st.sampled_from(idx))
    damaged = small_run[:i] + small_run[i + 1:]
    assert check_transcript(damaged, require_complete=True) != []


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_duplicating_a_message_is_detected(small_run, data):
    i = data.draw(st.integers(0, len(small_run) - 1))
    assert check_transcript(small_run[: i + 1] + small_run[i:], require_complete=True) != []
