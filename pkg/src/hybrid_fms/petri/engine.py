"""Timed colored Petri-net semantics: enabling, firing, clock advance, the
deterministic run loop and untimed reachability."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional, Protocol

from . import rng
from .expr import Color, Const, Var, evaluate, free_vars
from .net import (
    EVENT_KINDS,
    BoundExceeded,
    ColorToken,
    MalformedNet,
    Marking,
    NetModel,
    NotEnabled,
    SimEvent,
    Transition,
    check_token,
)

Binding = tuple[ColorToken, ...]


def validate(net: NetModel) -> list[str]:
    """Structural diagnostics; an empty list means the net is well formed."""
    diags: list[str] = []
    seen: set[str] = set()
    for p in net.places:
        if p.id in seen:
            diags.append(f"duplicate place id {p.id!r}")
        seen.add(p.id)
        if p.capacity is not None and p.capacity < 0:
            diags.append(f"place {p.id!r} has negative capacity")
    tseen: set[str] = set()
    for t in net.transitions:
        if t.id in tseen or t.id in seen:
            diags.append(f"duplicate transition id {t.id!r}")
        tseen.add(t.id)
    for a in net.arcs:
        if a.place not in seen:
            diags.append(f"arc references missing place {a.place!r}")
        if a.transition not in tseen:
            diags.append(f"arc references missing transition {a.transition!r}")
        if a.direction not in ("in", "out"):
            diags.append(f"arc {a.place!r}/{a.transition!r} has bad direction {a.direction!r}")
        if a.direction == "in" and not isinstance(a.expr, Var):
            diags.append(f"input arc {a.place!r}->{a.transition!r} must bind a variable")
    for t in net.transitions:
        ins = [a for a in net.arcs if a.transition == t.id and a.direction == "in"]
        outs = [a for a in net.arcs if a.transition == t.id and a.direction == "out"]
        if not ins:
            diags.append(f"transition {t.id!r} has no input arcs")
        bound = {a.expr.name for a in ins if isinstance(a.expr, Var)}
        if len(bound) != len(ins):
            diags.append(f"transition {t.id!r} binds a variable twice")
        for label, expr in [("guard", t.guard), ("delay", t.delay)] + [
            (f"output arc to {a.place!r}", a.expr) for a in outs
        ]:
            missing = free_vars(expr) - bound
            if missing:
                diags.append(f"transition {t.id!r} {label} uses unbound {sorted(missing)}")
        if isinstance(t.delay, Const) and (not isinstance(t.delay.value, int) or t.delay.value < 0):
            diags.append(f"transition {t.id!r} has negative or non-integer delay")
        if t.probability is not None:
            if not 0.0 <= t.probability <= 1.0:
                diags.append(f"transition {t.id!r} probability outside [0, 1]")
            alt = net.transition_map.get(t.otherwise or "")
            if alt is None:
                diags.append(f"transition {t.id!r} branch target {t.otherwise!r} missing")
            elif [(a.place, a.expr) for a in ins] != [
                (a.place, a.expr) for a in net.arcs if a.transition == alt.id and a.direction == "in"
            ]:
                diags.append(f"transition {t.id!r} and branch {alt.id!r} differ in input arcs")
            elif alt.guard != t.guard:
                diags.append(f"transition {t.id!r} and branch {alt.id!r} differ in guard")
    return diags


def require_valid(net: NetModel) -> None:
    diags = validate(net)
    if diags:
        raise MalformedNet(diags)


@dataclass(frozen=True)
class Enabled:
    transition: Transition
    binding: Binding
    enabling_time: int

    def sort_key(self) -> tuple:
        return (
            self.enabling_time,
            self.transition.priority,
            self.transition.id,
            tuple((tok.color.key(), tok.timestamp) for tok in self.binding),
        )


def _bindings_for(net: NetModel, t: Transition, marking: Marking) -> list[Binding]:
    """All distinct bindings of ``t``'s input variables that satisfy the guard."""
    plan = net.plans[t.id]
    tokens = marking.tokens
    for place in plan.places:
        if not tokens.get(place):
            return []
    n = len(plan.variables)
    lookups, checks_at = plan.compiled
    env: dict[str, Color] = {}
    chosen: list[ColorToken] = []
    used: set[tuple[str, int]] = set()
    out: list[Binding] = []

    def rec(level: int) -> None:
        if level == n:
            out.append(tuple(chosen))
            return
        place = plan.places[level]
        toks = tokens[place]
        lookup = lookups[level]
        if lookup is None:
            positions: Iterable[int] = range(len(toks))
        else:
            key, vfn = lookup
            positions = marking.lookup(place, key).get(vfn(env), ())
        var = plan.variables[level]
        checks = checks_at[level]
        for pos in positions:
            if (place, pos) in used:
                continue
            tok = toks[pos]
            env[var] = tok.color
            if all(c(env) for c in checks):
                used.add((place, pos))
                chosen.append(tok)
                rec(level + 1)
                chosen.pop()
                used.discard((place, pos))
        env.pop(var, None)

    rec(0)
    if len(out) < 2:
        return out
    # identical tokens give identical bindings; keep one
    seen: set[tuple] = set()
    unique = []
    for b in out:
        k = tuple((tok.color.key(), tok.timestamp) for tok in b)
        if k not in seen:
            seen.add(k)
            unique.append(b)
    return unique


def _env(net: NetModel, t: Transition, binding: Binding) -> dict[str, Color]:
    return {a.expr.name: tok.color for a, tok in zip(net.inputs(t.id), binding)}


def _capacity_ok(net: NetModel, t: Transition, binding: Binding, marking: Marking) -> bool:
    outs = net.outputs(t.id)
    if not any(net.place_map[a.place].capacity is not None for a in outs):
        return True
    delta: dict[str, int] = {}
    for a in net.inputs(t.id):
        delta[a.place] = delta.get(a.place, 0) - 1
    for a in outs:
        delta[a.place] = delta.get(a.place, 0) + 1
    for pid, d in delta.items():
        cap = net.place_map[pid].capacity
        if cap is not None and d > 0 and marking.count(pid) + d > cap:
            return False
    return True


def _scan(net: NetModel, marking: Marking) -> Iterator[Enabled]:
    clock = marking.clock
    for t in net.transitions:
        for b in _bindings_for(net, t, marking):
            if not _capacity_ok(net, t, b, marking):
                continue
            ready = max([clock] + [tok.timestamp for tok in b])
            yield Enabled(t, b, ready)


def enabled_bindings(net: NetModel, marking: Marking) -> list[Enabled]:
    """Every enabled (transition, binding) with the time it becomes
    fireable (never earlier than the marking clock), in firing order."""
    require_valid(net)
    return sorted(_scan(net, marking), key=Enabled.sort_key)


def _first(net: NetModel, marking: Marking) -> Optional[Enabled]:
    best = None
    best_key = None
    for e in _scan(net, marking):
        k = e.sort_key()
        if best_key is None or k < best_key:
            best, best_key = e, k
    return best


def _fire_unchecked(
    net: NetModel, marking: Marking, t: Transition, binding: Binding
) -> tuple[Marking, list[tuple[str, str, ColorToken]], int]:
    env = _env(net, t, binding)
    delay_fn, out_fns = net.compiled[t.id]
    delay = delay_fn(env)
    if not isinstance(delay, int) or delay < 0:
        raise NotEnabled(f"transition {t.id!r} produced invalid delay {delay!r}")
    consumed = [(a.place, tok) for a, tok in zip(net.inputs(t.id), binding)]
    moved: list[tuple[str, str, ColorToken]] = [("token-consumed", p, tok) for p, tok in consumed]
    ts = marking.clock + delay
    produced = []
    for place, fn in out_fns:
        tok = ColorToken(fn(env), ts)
        check_token(net.place_map[place], tok)
        produced.append((place, tok))
        moved.append(("token-created", place, tok))
    return marking.update(consumed, produced), moved, delay


def is_enabled(net: NetModel, marking: Marking, t: Transition, binding: Binding) -> bool:
    inputs = net.inputs(t.id)
    if len(inputs) != len(binding):
        return False
    need: dict[str, list[ColorToken]] = {}
    for a, tok in zip(inputs, binding):
        need.setdefault(a.place, []).append(tok)
    for pid, toks in need.items():
        pool = list(marking.get(pid))
        for tok in toks:
            if tok not in pool:
                return False
            pool.remove(tok)
    env = _env(net, t, binding)
    if not evaluate(t.guard, env):
        return False
    if any(tok.timestamp > marking.clock for tok in binding):
        return False
    return _capacity_ok(net, t, binding, marking)


def fire(
    net: NetModel, marking: Marking, transition: Transition | str, binding: Binding
) -> tuple[Marking, list[SimEvent]]:
    """Fire at ``marking.clock``; outputs are stamped clock + delay."""
    t = net.transition_map[transition] if isinstance(transition, str) else transition
    if not is_enabled(net, marking, t, binding):
        raise NotEnabled(f"transition {t.id!r} is not enabled for the given binding at t={marking.clock}")
    new, moved, delay = _fire_unchecked(net, marking, t, binding)
    return new, _fire_events(marking.clock, t, binding, moved, delay)


def _fire_events(clock: int, t: Transition, binding: Binding, moved, delay: int) -> list[SimEvent]:
    events = [
        SimEvent(
            clock,
            "fire",
            t.id,
            {"binding": [_tok_rec(tok) for tok in binding], "delay": delay},
            t.priority,
        )
    ]
    if t.tag in ("failure", "repair"):
        events.append(SimEvent(clock, t.tag, t.id, {"binding": [_tok_rec(tok) for tok in binding]}, t.priority))
    for kind, place, tok in moved:
        events.append(SimEvent(clock, kind, t.id, {"place": place, **_tok_rec(tok)}, t.priority))
    return events


def _tok_rec(tok: ColorToken) -> dict:
    return {"color": dict(tok.color), "ts": tok.timestamp}


def token_from_record(rec: dict) -> ColorToken:
    return ColorToken(Color(rec["color"]), rec["ts"])


class Deadlock:
    """Distinguished outcome of :func:`advance` when nothing can ever fire."""

    def __repr__(self) -> str:
        return "DEADLOCK"


DEADLOCK = Deadlock()


def advance(net: NetModel, marking: Marking) -> Marking | Deadlock:
    """Move the clock to the earliest enabling time; tokens are untouched."""
    first = _first(net, marking)
    if first is None:
        return DEADLOCK
    if first.enabling_time <= marking.clock:
        return marking
    return marking.at(first.enabling_time)


class Hooks(Protocol):
    """External command/notify channel consulted between firing steps."""

    def poll(self, sim: "Simulator") -> None: ...


@dataclass
class EventTrace:
    events: list[SimEvent]
    outcome: str
    final: Marking
    visited: list[Marking] = field(default_factory=list)

    def to_lines(self) -> bytes:
        return b"".join(
            json.dumps(e.to_record(), sort_keys=True, separators=(",", ":")).encode() + b"\n"
            for e in self.events
        )


def trace_from_lines(data: bytes) -> list[SimEvent]:
    return [SimEvent.from_record(json.loads(line)) for line in data.splitlines() if line.strip()]


class Simulator:
    """Stateful driver around the pure kernel functions.

    One instance per run; not shared across threads.
    """

    def __init__(self, net: NetModel, initial: Marking, seed: int = 0, record_markings: bool = False):
        require_valid(net)
        self.net = net
        self.marking = initial
        self.rng_state = rng.seed_state(seed)
        self.events: list[SimEvent] = []
        self._seq = 0
        self.record_markings = record_markings
        self.visited: list[Marking] = [initial] if record_markings else []
        # per-transition enabled bindings; only transitions next to a changed
        # place are re-scanned
        self._enabled: dict[str, list[tuple[int, tuple, Binding]]] = {}
        self._dirty: set[str] = {t.id for t in net.transitions}
        self._tokens_seen = initial.tokens

    @property
    def clock(self) -> int:
        return self.marking.clock

    def _emit(self, events: Iterable[SimEvent]) -> list[SimEvent]:
        out = []
        for e in events:
            assert e.kind in EVENT_KINDS, e.kind
            out.append(SimEvent(e.time, e.kind, e.transition_id, e.payload, e.priority, self._seq))
            self._seq += 1
        self.events.extend(out)
        return out

    def inject(self, place: str, color: Color | dict, payload: Optional[dict] = None) -> SimEvent:
        """Insert an externally commanded token at the current clock."""
        p = self.net.place_map.get(place)
        if p is None:
            raise MalformedNet([f"inject into unknown place {place!r}"])
        tok = ColorToken(color if isinstance(color, Color) else Color(color), self.clock)
        check_token(p, tok)
        if p.capacity is not None and self.marking.count(place) >= p.capacity:
            raise NotEnabled(f"place {place!r} is full")
        self.marking = self.marking.update([], [(place, tok)])
        self._tokens_seen = self.marking.tokens
        self._touch([place])
        if self.record_markings:
            self.visited.append(self.marking)
        rec = {"place": place, **_tok_rec(tok)}
        if payload:
            rec["command"] = payload
        return self._emit([SimEvent(self.clock, "external-command", None, rec)])[0]

    def notify(self, payload: dict) -> SimEvent:
        return self._emit([SimEvent(self.clock, "external-notify", None, payload)])[0]

    def _touch(self, places: Iterable[str]) -> None:
        deps = self.net.dependents
        for p in places:
            self._dirty.update(deps.get(p, ()))

    def _refresh(self) -> None:
        m = self.marking
        if m.tokens is not self._tokens_seen:
            # marking replaced from outside: rescan everything
            self._dirty = {t.id for t in self.net.transitions}
        for tid in self._dirty:
            t = self.net.transition_map[tid]
            entries = []
            for b in _bindings_for(self.net, t, m):
                if _capacity_ok(self.net, t, b, m):
                    entries.append((max(tok.timestamp for tok in b), t.priority, tid, b))
            self._enabled[tid] = entries
        self._dirty.clear()
        self._tokens_seen = m.tokens

    def peek(self) -> Optional[Enabled]:
        self._refresh()
        clock = self.clock
        best = None
        ties: list[Binding] = []
        for entries in self._enabled.values():
            for ts, prio, tid, b in entries:
                k = (max(clock, ts), prio, tid)
                if best is None or k < best:
                    best, ties = k, [b]
                elif k == best:
                    ties.append(b)
        if best is None:
            return None
        # binding order only matters between candidates of the same transition
        b = min(ties, key=lambda b: tuple((tok.color.key(), tok.timestamp) for tok in b))
        return Enabled(self.net.transition_map[best[2]], b, best[0])

    def step(self, horizon: Optional[int] = None) -> Optional[list[SimEvent]]:
        """Fire the deterministically-first binding. Returns None (and
        records the outcome) on deadlock or when it lies past ``horizon``."""
        nxt = self.peek()
        if nxt is None:
            self._emit([SimEvent(self.clock, "deadlock", None, {})])
            return None
        if horizon is not None and nxt.enabling_time > horizon:
            self._emit([SimEvent(self.clock, "horizon", None, {"next": nxt.enabling_time, "horizon": horizon})])
            return None
        if nxt.enabling_time > self.clock:
            self.marking = self.marking.at(nxt.enabling_time)
        t = nxt.transition
        if t.probability is not None:
            hit, self.rng_state = rng.bernoulli(t.probability, self.rng_state)
            if not hit:
                t = self.net.transition_map[t.otherwise]  # type: ignore[index]
        new, moved, delay = _fire_unchecked(self.net, self.marking, t, nxt.binding)
        events = _fire_events(self.clock, t, nxt.binding, moved, delay)
        self.marking = new
        self._tokens_seen = new.tokens
        self._touch(place for _, place, _ in moved)
        if self.record_markings:
            self.visited.append(new)
        return self._emit(events)

    def trace(self, outcome: str) -> EventTrace:
        return EventTrace(list(self.events), outcome, self.marking, list(self.visited))


def run(
    net: NetModel,
    initial: Marking,
    horizon: int,
    seed: int = 0,
    hooks: Optional[Hooks] = None,
    max_steps: Optional[int] = None,
    record_markings: bool = False,
) -> EventTrace:
    """Fire until the horizon or deadlock, consulting ``hooks`` before each step."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    sim = Simulator(net, initial, seed, record_markings)
    steps = 0
    while True:
        if hooks is not None:
            hooks.poll(sim)
        if max_steps is not None and steps >= max_steps:
            return sim.trace("max-steps")
        if sim.step(horizon) is None:
            return sim.trace(sim.events[-1].kind)
        steps += 1


def reachable_markings(net: NetModel, initial: Marking, bound: int) -> set[tuple]:
    """Untimed reachability set (as ``Marking.untimed_key`` tuples) by BFS.

    Raises BoundExceeded once more than ``bound`` markings are discovered.
    """
    require_valid(net)

    def untimed(m: Marking) -> Marking:
        return Marking({p: tuple(ColorToken(t.color, 0) for t in toks) for p, toks in m.tokens.items()}, 0)

    start = untimed(initial)
    seen = {start.untimed_key()}
    queue = deque([start])
    while queue:
        m = queue.popleft()
        for e in list(_scan(net, m)):
            nxt, _, _ = _fire_unchecked(net, m, e.transition, e.binding)
            nxt = untimed(nxt)
            k = nxt.untimed_key()
            if k not in seen:
                seen.add(k)
                if len(seen) > bound:
                    raise BoundExceeded(f"more than {bound} reachable markings")
                queue.append(nxt)
    return seen


def replay(net: NetModel, initial: Marking, events: Iterable[SimEvent]) -> list[Marking]:
    """Re-apply a trace's fire and external-command events from ``initial``.

    Each fire must be enabled at its recorded clock; returns every
    intermediate marking.
    """
    sim = Simulator(net, initial)
    out = [initial]
    for e in events:
        if e.kind == "external-command":
            place = e.payload["place"]
            sim.marking = sim.marking.update([], [(place, token_from_record(e.payload))], clock=e.time)
            sim._tokens_seen = sim.marking.tokens
            sim._touch([place])
            out.append(sim.marking)
        elif e.kind == "fire":
            t = net.transition_map.get(e.transition_id or "")
            if t is None:
                raise NotEnabled(f"replayed fire of unknown transition {e.transition_id!r}")
            binding = tuple(token_from_record(r) for r in e.payload["binding"])
            sim.marking = sim.marking.at(e.time)
            sim._refresh()
            if not any(b == binding and ts <= e.time for ts, _, _, b in sim._enabled.get(t.id, ())):
                raise NotEnabled(f"replayed fire of {t.id!r} at t={e.time} was not enabled")
            new, moved, _ = _fire_unchecked(net, sim.marking, t, binding)
            sim.marking = new
            sim._tokens_seen = new.tokens
            sim._touch(place for _, place, _ in moved)
            out.append(new)
    return out


def trace_records(events: Iterable[SimEvent]) -> list[dict[str, Any]]:
    return [e.to_record() for e in events]
