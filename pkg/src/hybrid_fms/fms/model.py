"""The three-station FMS cell as a timed colored Petri net.

Stations: machining (CNC + robot), assembly (glue/assembly + laser QC) and
the AS/RS (crane + conveyor). Every part of a book order is retrieved from
the AS/RS, carried to the CNC, machined, carried to assembly, joined with
its siblings, and the finished book is carried back to the AS/RS.

Operations only start when a command token for that exact part/order is
present in the ``cmd`` place; the controller (agents or the conventional
dispatcher) decides when to inject those tokens.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from ..petri import rng
from ..petri.expr import TRUE, Color, Const, Eq, Field, Var, all_of, record
from ..petri.net import Arc, Marking, NetModel, Place, Transition, make_marking

PART_KINDS = ("body", "handle", "cover")

STATION1 = "station1-machining"
STATION2 = "station2-assembly"
STATION3 = "station3-asrs"
STATIONS = (STATION1, STATION2, STATION3)

CNC = "cnc"
ROBOT = "robot"
ASSEMBLY = "glue-assembly"
LASER = "laser-qc"
CRANE = "asrs-crane"
CONVEYOR = "conveyor"

# the folded resources (laser-qc, asrs-crane) never appear in the net
RESOURCE_STATION = {
    CNC: STATION1,
    ROBOT: STATION1,
    ASSEMBLY: STATION2,
    LASER: STATION2,
    CRANE: STATION3,
    CONVEYOR: STATION3,
}

PART_STATES = ("stored", "in-transport", "machining", "awaiting-assembly", "assembled")
_PART_NEXT = {
    "stored": ("in-transport",),
    "in-transport": ("machining", "awaiting-assembly"),
    "machining": ("in-transport",),
    "awaiting-assembly": ("assembled",),
    "assembled": (),
}


class InvalidConfig(ValueError):
    pass


class UnknownKind(ValueError):
    pass


@dataclass(frozen=True)
class StationSpec:
    id: str
    resources: tuple[str, ...]
    process_time: int

    def __post_init__(self) -> None:
        if self.id not in STATIONS:
            raise InvalidConfig(f"unknown station {self.id!r}")
        if self.process_time <= 0:
            raise InvalidConfig("process_time must be positive")


@dataclass
class Part:
    part_id: int
    kind: str
    order_id: int
    state: str = "stored"

    def move_to(self, state: str) -> None:
        if state not in _PART_NEXT[self.state]:
            raise ValueError(f"part {self.part_id}: illegal transition {self.state} -> {state}")
        self.state = state


@dataclass
class BookOrder:
    order_id: int
    release_time: int
    parts: tuple[Part, ...]
    completion_time: Optional[int] = None

    def __post_init__(self) -> None:
        if sorted(p.kind for p in self.parts) != sorted(PART_KINDS):
            raise InvalidConfig(f"order {self.order_id} must hold exactly one body, handle and cover")

    def complete(self, t: int) -> None:
        if t < self.release_time:
            raise ValueError("completion before release")
        self.completion_time = t


@dataclass(frozen=True)
class FailureModel:
    target_resource: str = CNC
    probability: float = 0.2
    repair_time: int = 30_000
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise InvalidConfig("failure probability must lie in [0, 1]")
        if self.repair_time <= 0:
            raise InvalidConfig("repair_time must be positive")
        if self.target_resource != CNC:
            raise InvalidConfig("only CNC failures are modelled")


@dataclass(frozen=True)
class FmsConfig:
    order_count: int = 1000
    transport_time: int = 8_000
    cnc_time: int = 10_000
    assembly_time: int = 15_000
    failure: Optional[FailureModel] = None
    seed: int = 1
    carriers: tuple[str, ...] = (ROBOT, CONVEYOR)

    def __post_init__(self) -> None:
        if self.order_count < 0:
            raise InvalidConfig("order_count must be >= 0")
        for name in ("transport_time", "cnc_time", "assembly_time"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if not self.carriers or len(set(self.carriers)) != len(self.carriers):
            raise InvalidConfig("carriers must be a non-empty list of distinct resources")
        for c in self.carriers:
            if c not in (ROBOT, CONVEYOR):
                raise InvalidConfig(f"unknown transport resource {c!r}")

    @property
    def repair_time(self) -> Optional[int]:
        return self.failure.repair_time if self.failure else None

    def with_failure(self, probability: float = 0.2, repair_time: int = 30_000) -> "FmsConfig":
        return replace(self, failure=FailureModel(CNC, probability, repair_time, self.seed))


def default_stations(cfg: FmsConfig) -> tuple[StationSpec, ...]:
    return (
        StationSpec(STATION1, (CNC, ROBOT), cfg.cnc_time),
        StationSpec(STATION2, (ASSEMBLY, LASER), cfg.assembly_time),
        StationSpec(STATION3, (CRANE, CONVEYOR), cfg.transport_time),
    )


PART = ("kind", "order", "part")
CMD = ("action", "order", "part", "res")
RES = ("res",)


def _arc_in(place: str, t: str, var: str) -> Arc:
    return Arc(place, t, "in", Var(var))


def _arc_out(place: str, t: str, expr) -> Arc:
    return Arc(place, t, "out", expr)


def _eq(var: str, key: str, other) -> Eq:
    return Eq(Field(var, key), other)


def _part_of(v: str):
    return record(part=Field(v, "part"), kind=Field(v, "kind"), order=Field(v, "order"))


def build_fms_net(config: FmsConfig) -> NetModel:
    """Net of the FMS cell; failure/repair transitions guard the CNC when a
    failure model is configured."""
    places = [
        Place("orders", ("order",)),
        *(Place(f"store_{k}", PART) for k in PART_KINDS),
        Place("cmd", CMD),
        Place("carriers", RES, capacity=len(config.carriers)),
        Place("moving", ("dest", "kind", "order", "part", "res")),
        Place("buf_s1", PART),
        Place("cnc_idle", RES, capacity=1),
        Place("cnc_busy", PART + ("res",), capacity=1),
        Place("done_s1", PART),
        Place("buf_s2", PART),
        Place("asm_idle", RES, capacity=1),
        Place("asm_busy", ("order", "res"), capacity=1),
        Place("done_s2", ("order",)),
        Place("shipping", ("order", "res")),
        Place("finished", ("order",)),
    ]
    T = config.transport_time
    trans: list[Transition] = []
    arcs: list[Arc] = []

    def carry(tid: str, action: str, src: str, key: str, out_place: str, out_expr) -> None:
        trans.append(
            Transition(
                tid,
                all_of([
                    _eq("c", "action", Const(action)),
                    _eq("p", key, Field("c", key)),
                    _eq("r", "res", Field("c", "res")),
                ]),
                Const(T),
                priority=2,
            )
        )
        arcs.extend([_arc_in("cmd", tid, "c"), _arc_in(src, tid, "p"), _arc_in("carriers", tid, "r")])
        arcs.append(_arc_out(out_place, tid, out_expr))

    for k in PART_KINDS:
        carry(
            f"load_{k}", "move-s1", f"store_{k}", "part", "moving",
            record(part=Field("p", "part"), kind=Field("p", "kind"), order=Field("p", "order"),
                   res=Field("r", "res"), dest=Const("s1")),
        )

    def unload(tid: str, dest: str, out_place: str) -> None:
        trans.append(Transition(tid, _eq("m", "dest", Const(dest)), Const(0), priority=0))
        arcs.extend([
            _arc_in("moving", tid, "m"),
            _arc_out(out_place, tid, _part_of("m")),
            _arc_out("carriers", tid, record(res=Field("m", "res"))),
        ])

    unload("unload_s1", "s1", "buf_s1")

    cnc_guard = all_of([
        _eq("c", "action", Const("machine")),
        _eq("b", "part", Field("c", "part")),
        _eq("k", "res", Field("c", "res")),
    ])
    cnc_inputs = lambda tid: [_arc_in("cmd", tid, "c"), _arc_in("buf_s1", tid, "b"), _arc_in("cnc_idle", tid, "k")]
    busy = record(part=Field("b", "part"), kind=Field("b", "kind"), order=Field("b", "order"), res=Field("k", "res"))
    if config.failure is not None:
        places.append(Place("cnc_down", PART + ("res",), capacity=1))
        trans.append(Transition(
            "cnc_fail", cnc_guard, Const(config.failure.repair_time), priority=1,
            probability=config.failure.probability, otherwise="cnc_start", tag="failure",
        ))
        arcs.extend(cnc_inputs("cnc_fail"))
        arcs.append(_arc_out("cnc_down", "cnc_fail", busy))
        trans.append(Transition("cnc_repair", TRUE, Const(0), priority=0, tag="repair"))
        arcs.extend([
            _arc_in("cnc_down", "cnc_repair", "d"),
            _arc_out("buf_s1", "cnc_repair", _part_of("d")),
            _arc_out("cnc_idle", "cnc_repair", record(res=Field("d", "res"))),
            _arc_out("cmd", "cnc_repair", record(action=Const("machine"), part=Field("d", "part"),
                                                 order=Field("d", "order"), res=Field("d", "res"))),
        ])
    trans.append(Transition("cnc_start", cnc_guard, Const(config.cnc_time), priority=2))
    arcs.extend(cnc_inputs("cnc_start"))
    arcs.append(_arc_out("cnc_busy", "cnc_start", busy))
    trans.append(Transition("cnc_end", TRUE, Const(0), priority=0))
    arcs.extend([
        _arc_in("cnc_busy", "cnc_end", "x"),
        _arc_out("done_s1", "cnc_end", _part_of("x")),
        _arc_out("cnc_idle", "cnc_end", record(res=Field("x", "res"))),
    ])

    carry("move_s2", "move-s2", "done_s1", "part", "moving",
          record(part=Field("p", "part"), kind=Field("p", "kind"), order=Field("p", "order"),
                 res=Field("r", "res"), dest=Const("s2")))
    unload("unload_s2", "s2", "buf_s2")

    trans.append(Transition(
        "asm_start",
        all_of([
            _eq("c", "action", Const("assemble")),
            _eq("b", "order", Field("c", "order")),
            _eq("b", "kind", Const("body")),
            _eq("h", "order", Field("c", "order")),
            _eq("h", "kind", Const("handle")),
            _eq("v", "order", Field("c", "order")),
            _eq("v", "kind", Const("cover")),
            _eq("a", "res", Field("c", "res")),
        ]),
        Const(config.assembly_time),
        priority=2,
    ))
    arcs.extend([
        _arc_in("cmd", "asm_start", "c"),
        _arc_in("buf_s2", "asm_start", "b"),
        _arc_in("buf_s2", "asm_start", "h"),
        _arc_in("buf_s2", "asm_start", "v"),
        _arc_in("asm_idle", "asm_start", "a"),
        _arc_out("asm_busy", "asm_start", record(order=Field("c", "order"), res=Field("a", "res"))),
    ])
    trans.append(Transition("asm_end", TRUE, Const(0), priority=0))
    arcs.extend([
        _arc_in("asm_busy", "asm_end", "x"),
        _arc_out("done_s2", "asm_end", record(order=Field("x", "order"))),
        _arc_out("asm_idle", "asm_end", record(res=Field("x", "res"))),
    ])

    carry("move_s3", "move-s3", "done_s2", "order", "shipping",
          record(order=Field("p", "order"), res=Field("r", "res")))
    trans.append(Transition("unload_s3", _eq("o", "order", Field("s", "order")), Const(0), priority=0))
    arcs.extend([
        _arc_in("shipping", "unload_s3", "s"),
        _arc_in("orders", "unload_s3", "o"),
        _arc_out("finished", "unload_s3", record(order=Field("s", "order"))),
        _arc_out("carriers", "unload_s3", record(res=Field("s", "res"))),
    ])
    return NetModel(tuple(places), tuple(trans), tuple(arcs), name="fms-lab")


# transitions that occupy the resource named by their command token (first input)
WORK_TRANSITIONS = frozenset(
    {f"load_{k}" for k in PART_KINDS} | {"cnc_start", "move_s2", "asm_start", "move_s3"}
)


def release_orders(config: FmsConfig) -> list[BookOrder]:
    """All orders arrive at t=0 in order-id order; three parts each."""
    orders = []
    for oid in range(config.order_count):
        parts = tuple(Part(3 * oid + i, k, oid) for i, k in enumerate(PART_KINDS))
        orders.append(BookOrder(oid, 0, parts))
    return orders


def initial_marking(config: FmsConfig, net: NetModel, orders: list[BookOrder]) -> Marking:
    init: dict[str, list] = {f"store_{k}": [] for k in PART_KINDS}
    init["orders"] = [{"order": o.order_id} for o in orders]
    for o in orders:
        for p in o.parts:
            init[f"store_{p.kind}"].append({"part": p.part_id, "kind": p.kind, "order": o.order_id})
    init["carriers"] = [{"res": c} for c in config.carriers]
    init["cnc_idle"] = [{"res": CNC}]
    init["asm_idle"] = [{"res": ASSEMBLY}]
    return make_marking(net, init)


def part_census(marking: Marking) -> dict[str, int]:
    """Parts still in the AS/RS, in flight, and stored as finished books."""
    single = ("moving", "buf_s1", "cnc_busy", "cnc_down", "done_s1", "buf_s2")
    triple = ("asm_busy", "done_s2", "shipping")
    return {
        "waiting": sum(marking.count(f"store_{k}") for k in PART_KINDS),
        "in_flight": sum(marking.count(p) for p in single) + 3 * sum(marking.count(p) for p in triple),
        "stored": 3 * marking.count("finished"),
    }


def sample_failure(model: FailureModel, rng_state: int) -> tuple[bool, int]:
    """One Bernoulli draw with the SplitMix64 generator."""
    return rng.bernoulli(model.probability, rng_state)


@dataclass(frozen=True)
class RouteStep:
    step: str
    station: str
    capability: str
    action: Optional[str]
    duration: str  # FmsConfig attribute name, or "" for instantaneous


_ROUTE = (
    RouteStep("asrs-retrieve", STATION3, "storage", None, ""),
    RouteStep("transport-s1", STATION1, "transport", "move-s1", "transport_time"),
    RouteStep("cnc", STATION1, "milling", "machine", "cnc_time"),
    RouteStep("transport-s2", STATION2, "transport", "move-s2", "transport_time"),
    RouteStep("assembly", STATION2, "assembly", "assemble", "assembly_time"),
    RouteStep("transport-s3", STATION3, "transport", "move-s3", "transport_time"),
    RouteStep("store", STATION3, "storage", None, ""),
)


def part_route(kind: str) -> list[RouteStep]:
    if kind not in PART_KINDS:
        raise UnknownKind(kind)
    return list(_ROUTE)


def color(**kw) -> Color:
    return Color(kw)
