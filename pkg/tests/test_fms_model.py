import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_fms.fms import (
    BookOrder,
    FailureModel,
    FmsConfig,
    InvalidConfig,
    Part,
    UnknownKind,
    build_fms_net,
    dump_config,
    initial_marking,
    parse_config,
    part_census,
    part_route,
    release_orders,
    sample_failure,
)
from hybrid_fms.fms.model import ASSEMBLY, CNC, CONVEYOR, ROBOT
from hybrid_fms.petri import NotEnabled, Simulator, validate
from hybrid_fms.petri.rng import seed_state

# one order, every operation strictly after the previous one
SEQUENTIAL_ONE_ORDER_MS = 3 * (8000 + 10000 + 8000) + 15000 + 8000


def drive_sequential(cfg, order_id=0):
    """Issue one command at a time, waiting for each to complete."""
    net = build_fms_net(cfg)
    orders = release_orders(cfg)
    sim = Simulator(net, initial_marking(cfg, net, orders), seed=cfg.seed)
    o = orders[order_id]
    plan = []
    for p in o.parts:
        plan += [("move-s1", p.part_id, ROBOT, "unload_s1"), ("machine", p.part_id, CNC, "cnc_end"),
                 ("move-s2", p.part_id, ROBOT, "unload_s2")]
    plan += [("assemble", -1, ASSEMBLY, "asm_end"), ("move-s3", -1, CONVEYOR, "unload_s3")]
    for action, part, res, until in plan:
        sim.inject("cmd", {"action": action, "order": o.order_id, "part": part, "res": res})
        while True:
            evs = sim.step()
            assert evs is not None, f"stuck waiting for {until}"
            if evs[0].kind == "fire" and evs[0].transition_id == until:
                break
    return sim


def test_sequential_single_order_oracle():
    assert SEQUENTIAL_ONE_ORDER_MS == 101000
    sim = drive_sequential(FmsConfig(order_count=1))
    assert sim.clock == SEQUENTIAL_ONE_ORDER_MS
    assert part_census(sim.marking) == {"waiting": 0, "in_flight": 0, "stored": 3}


def test_net_is_valid_with_and_without_failures():
    assert validate(build_fms_net(FmsConfig())) == []
    assert validate(build_fms_net(FmsConfig().with_failure())) == []


def test_commands_gate_transitions():
    cfg = FmsConfig(order_count=1)
    net = build_fms_net(cfg)
    sim = Simulator(net, initial_marking(cfg, net, release_orders(cfg)))
    assert sim.step() is None  # nothing moves without a command
    # a machining command before the part is at station 1 leaves the net idle
    sim.inject("cmd", {"action": "machine", "order": 0, "part": 0, "res": CNC})
    assert sim.step() is None
    with pytest.raises(NotEnabled):
        sim.inject("cnc_idle", {"res": CNC})  # capacity 1


def test_wrong_carrier_never_fires():
    cfg = FmsConfig(order_count=1, carriers=(CONVEYOR,))
    net = build_fms_net(cfg)
    sim = Simulator(net, initial_marking(cfg, net, release_orders(cfg)))
    sim.inject("cmd", {"action": "move-s1", "order": 0, "part": 0, "res": ROBOT})
    assert sim.step() is None


def test_certain_failure_blocks_machining():
    sure = FmsConfig(order_count=1, failure=FailureModel(probability=1.0, repair_time=30_000))
    # probability 1 never lets machining start, so the run stalls at the first part
    net = build_fms_net(sure)
    sim = Simulator(net, initial_marking(sure, net, release_orders(sure)))
    sim.inject("cmd", {"action": "move-s1", "order": 0, "part": 0, "res": ROBOT})
    sim.inject("cmd", {"action": "machine", "order": 0, "part": 0, "res": CNC})
    for _ in range(8):
        sim.step()
    kinds = [e.kind for e in sim.events]
    assert kinds.count("failure") >= 2 and kinds.count("repair") >= 1
    assert "cnc_start" not in {e.transition_id for e in sim.events}
    fail = next(e for e in sim.events if e.kind == "failure")
    rep = next(e for e in sim.events if e.kind == "repair")
    assert rep.time - fail.time == 30_000


def test_failure_rate_over_many_draws():
    model = FailureModel(probability=0.2)
    s = seed_state(11)
    n = 5000
    hits = 0
    for _ in range(n):
        h, s = sample_failure(model, s)
        hits += h
    assert 0.19 <= hits / n <= 0.21


@pytest.mark.parametrize("kw", [
    {"order_count": -1}, {"cnc_time": 0}, {"transport_time": -5}, {"carriers": ()},
    {"carriers": ("robot", "robot")}, {"carriers": ("forklift",)},
])
def test_invalid_config(kw):
    with pytest.raises(InvalidConfig):
        FmsConfig(**kw)


def test_invalid_failure_model():
    with pytest.raises(InvalidConfig):
        FailureModel(probability=1.5)
    with pytest.raises(InvalidConfig):
        FailureModel(repair_time=0)
    with pytest.raises(InvalidConfig):
        FailureModel(target_resource=ROBOT)


def test_orders_hold_one_of_each_kind():
    orders = release_orders(FmsConfig(order_count=4))
    assert [o.order_id for o in orders] == [0, 1, 2, 3]
    assert [p.part_id for p in orders[2].parts] == [6, 7, 8]
    assert all(o.release_time == 0 for o in orders)
    with pytest.raises(InvalidConfig):
        BookOrder(9, 0, (Part(0, "body", 9), Part(1, "body", 9), Part(2, "cover", 9)))


def test_part_lifecycle():
    p = Part(0, "body", 0)
    for s in ("in-transport", "machining", "in-transport", "awaiting-assembly", "assembled"):
        p.move_to(s)
    with pytest.raises(ValueError):
        p.move_to("stored")


def test_route():
    steps = [s.step for s in part_route("cover")]
    assert steps[0] == "asrs-retrieve" and steps[-1] == "store"
    with pytest.raises(UnknownKind):
        part_route("spine")


def test_config_text_round_trip():
    cfg = FmsConfig(order_count=7, seed=3).with_failure(0.3, 12_000)
    loaded = parse_config(dump_config(cfg))
    assert loaded.fms.order_count == 7 and loaded.fms.seed == 3
    assert loaded.fms.failure.probability == 0.3 and loaded.fms.repair_time == 12_000


def test_config_extras_and_errors():
    loaded = parse_config("order_count = 2  # small\ncapability.robot = transport\nwindow = 4\n")
    assert loaded.capabilities == {"robot": ("transport",)}
    assert loaded.extra == {"window": "4"}
    with pytest.raises(InvalidConfig):
        parse_config("order_count 3")
    with pytest.raises(InvalidConfig):
        parse_config("cnc_time = fast")


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=6), st.integers(min_value=0, max_value=400))
def test_part_census_conserved(n_orders, steps):
    cfg = FmsConfig(order_count=n_orders)
    net = build_fms_net(cfg)
    orders = release_orders(cfg)
    sim = Simulator(net, initial_marking(cfg, net, orders))
    # feed every command up front; the net serializes them by resource
    for o in orders:
        for p in o.parts:
            for action in ("move-s1", "machine", "move-s2"):
                res = CNC if action == "machine" else ROBOT
                sim.inject("cmd", {"action": action, "order": o.order_id, "part": p.part_id, "res": res})
        sim.inject("cmd", {"action": "assemble", "order": o.order_id, "part": -1, "res": ASSEMBLY})
        sim.inject("cmd", {"action": "move-s3", "order": o.order_id, "part": -1, "res": CONVEYOR})
    for _ in range(steps):
        c = part_census(sim.marking)
        assert sum(c.values()) == 3 * n_orders
        if sim.step() is None:
            break
