"""Net structure: places, transitions, arcs, markings and trace events."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, NamedTuple, Optional

from .expr import TRUE, Color, Const, Eq, Expr, Field, Var, compile_expr, conjuncts, free_vars


class NetError(Exception):
    """Base class for kernel errors."""


class MalformedNet(NetError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


class NotEnabled(NetError):
    pass


class ColorMismatch(NetError):
    pass


class BoundExceeded(NetError):
    pass


class ColorToken(NamedTuple):
    color: Color
    timestamp: int


@dataclass(frozen=True)
class Place:
    id: str
    color_set: tuple[str, ...] = ()
    capacity: Optional[int] = None

    def conforms(self, color: Color) -> bool:
        return len(color) == len(self.color_set) and all(k in color for k in self.color_set)


@dataclass(frozen=True)
class Transition:
    """A timed transition.

    ``priority``: lower values win when several bindings become enabled at
    the same instant. ``probability``/``otherwise`` form a stochastic
    branch: when this transition is selected, it fires with the given
    probability and the ``otherwise`` transition fires with the same
    binding instead. ``tag`` marks failure/repair transitions so they show
    up as dedicated trace events.
    """

    id: str
    guard: Expr = TRUE
    delay: Expr = Const(0)
    priority: int = 0
    probability: Optional[float] = None
    otherwise: Optional[str] = None
    tag: Optional[str] = None


@dataclass(frozen=True)
class Arc:
    """Directed arc. Input arcs (place -> transition) bind one token to a
    variable (``expr`` is a ``Var``); output arcs evaluate ``expr`` to the
    produced color."""

    place: str
    transition: str
    direction: str  # "in" | "out"
    expr: Expr


@dataclass(frozen=True)
class NetModel:
    places: tuple[Place, ...]
    transitions: tuple[Transition, ...]
    arcs: tuple[Arc, ...]
    name: str = "net"

    @cached_property
    def place_map(self) -> dict[str, Place]:
        return {p.id: p for p in self.places}

    @cached_property
    def transition_map(self) -> dict[str, Transition]:
        return {t.id: t for t in self.transitions}

    def inputs(self, tid: str) -> tuple[Arc, ...]:
        return self._arcs_by_transition[tid][0]

    def outputs(self, tid: str) -> tuple[Arc, ...]:
        return self._arcs_by_transition[tid][1]

    @cached_property
    def _arcs_by_transition(self) -> dict[str, tuple[tuple[Arc, ...], tuple[Arc, ...]]]:
        out: dict[str, tuple[list[Arc], list[Arc]]] = {t.id: ([], []) for t in self.transitions}
        for a in self.arcs:
            if a.transition in out:
                out[a.transition][0 if a.direction == "in" else 1].append(a)
        return {k: (tuple(i), tuple(o)) for k, (i, o) in out.items()}

    @cached_property
    def dependents(self) -> dict[str, tuple[str, ...]]:
        """Transitions whose enabledness can change when ``place`` changes:
        its consumers, and producers into it when it has a capacity."""
        out: dict[str, set[str]] = {p.id: set() for p in self.places}
        for a in self.arcs:
            cap = self.place_map.get(a.place)
            if a.place in out and (a.direction == "in" or (cap is not None and cap.capacity is not None)):
                out[a.place].add(a.transition)
        return {p: tuple(sorted(ts)) for p, ts in out.items()}

    @cached_property
    def compiled(self) -> dict[str, tuple]:
        """Per transition: compiled delay and (place, compiled expr) per output arc."""
        return {
            t.id: (compile_expr(t.delay), tuple((a.place, compile_expr(a.expr)) for a in self.outputs(t.id)))
            for t in self.transitions
        }

    @cached_property
    def plans(self) -> dict[str, "JoinPlan"]:
        return {t.id: JoinPlan.build(t, self.inputs(t.id)) for t in self.transitions}


@dataclass(frozen=True)
class JoinPlan:
    """Precomputed binding search: per input arc, an optional indexed
    lookup (field, value-expression) plus the guard atoms that become
    checkable once that arc's variable is bound."""

    variables: tuple[str, ...]
    places: tuple[str, ...]
    lookups: tuple[Optional[tuple[str, Expr]], ...]
    checks: tuple[tuple[Expr, ...], ...]

    @cached_property
    def compiled(self) -> tuple[tuple, tuple]:
        lookups = tuple(None if lk is None else (lk[0], compile_expr(lk[1])) for lk in self.lookups)
        checks = tuple(tuple(compile_expr(c) for c in level) for level in self.checks)
        return lookups, checks

    @classmethod
    def build(cls, t: Transition, inputs: tuple[Arc, ...]) -> "JoinPlan":
        atoms = conjuncts(t.guard)
        used = [False] * len(atoms)
        bound: set[str] = set()
        variables, places, lookups, checks = [], [], [], []
        for arc in inputs:
            v = arc.expr.name if isinstance(arc.expr, Var) else ""
            lookup = None
            for i, a in enumerate(atoms):
                if used[i] or not isinstance(a, Eq):
                    continue
                for this, other in ((a.left, a.right), (a.right, a.left)):
                    if (
                        isinstance(this, Field)
                        and this.var == v
                        and free_vars(other) <= bound
                    ):
                        lookup = (this.key, other)
                        break
                if lookup is not None:
                    used[i] = True
                    break
            bound.add(v)
            now = []
            for i, a in enumerate(atoms):
                if not used[i] and free_vars(a) <= bound:
                    used[i] = True
                    now.append(a)
            variables.append(v)
            places.append(arc.place)
            lookups.append(lookup)
            checks.append(tuple(now))
        # atoms over unbound names stay unchecked here; validate() reports them
        return cls(tuple(variables), tuple(places), tuple(lookups), tuple(checks))


@dataclass
class Marking:
    """Token state. ``tokens`` maps place id to a tuple of tokens; treat
    instances as values (operations return new markings)."""

    tokens: dict[str, tuple[ColorToken, ...]]
    clock: int = 0
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def count(self, place: str) -> int:
        return len(self.tokens.get(place, ()))

    def get(self, place: str) -> tuple[ColorToken, ...]:
        return self.tokens.get(place, ())

    def lookup(self, place: str, key: str) -> dict[Any, tuple[int, ...]]:
        """Positions of the tokens in ``place`` by the value of field ``key``."""
        idx = self._index.get((place, key))
        if idx is None:
            acc: dict[Any, list[int]] = {}
            for pos, tok in enumerate(self.tokens.get(place, ())):
                acc.setdefault(tok.color.get(key), []).append(pos)
            idx = {v: tuple(ps) for v, ps in acc.items()}
            self._index[(place, key)] = idx
        return idx

    def update(
        self,
        consumed: list[tuple[str, ColorToken]],
        produced: list[tuple[str, ColorToken]],
        clock: Optional[int] = None,
    ) -> "Marking":
        """New marking with tokens moved. Removal swaps the last token of the
        place into the gap (token order inside a place carries no meaning),
        which lets the lookup indexes be patched instead of rebuilt."""
        places = {p for p, _ in consumed} | {p for p, _ in produced}
        tokens = dict(self.tokens)
        index = dict(self._index)
        lists = {p: list(self.tokens.get(p, ())) for p in places}
        keyed = {p: [k for (q, k) in self._index if q == p] for p in places}
        for p in places:
            for k in keyed[p]:
                index[(p, k)] = dict(index[(p, k)])

        def move(idx: dict, v: Any, old: Optional[int], new: Optional[int]) -> None:
            ps = idx.get(v, ())
            if old is not None:
                ps = tuple(x for x in ps if x != old)
            if new is not None:
                ps = ps + (new,)
            if ps:
                idx[v] = ps
            else:
                idx.pop(v, None)

        for p, tok in consumed:
            toks = lists[p]
            i = self._position(toks, p, tok, index, keyed[p])
            last = len(toks) - 1
            for k in keyed[p]:
                move(index[(p, k)], tok.color.get(k), i, None)
            if i != last:
                moved = toks[last]
                toks[i] = moved
                for k in keyed[p]:
                    move(index[(p, k)], moved.color.get(k), last, i)
            toks.pop()
        for p, tok in produced:
            toks = lists[p]
            for k in keyed[p]:
                move(index[(p, k)], tok.color.get(k), None, len(toks))
            toks.append(tok)
        for p in places:
            tokens[p] = tuple(lists[p])
        return Marking(tokens, self.clock if clock is None else clock, index)

    @staticmethod
    def _position(toks: list, place: str, tok: ColorToken, index: dict, keys: list) -> int:
        if keys:
            for i in index[(place, keys[0])].get(tok.color.get(keys[0]), ()):
                if toks[i] is tok:
                    return i
            for i in index[(place, keys[0])].get(tok.color.get(keys[0]), ()):
                if toks[i] == tok:
                    return i
        for i, t in enumerate(toks):
            if t is tok:
                return i
        return toks.index(tok)

    def untimed_key(self) -> tuple:
        return tuple(
            (p, tuple(sorted(t.color.key() for t in toks)))
            for p, toks in sorted(self.tokens.items())
            if toks
        )

    def timed_key(self) -> tuple:
        return tuple(
            (p, tuple(sorted((t.color.key(), t.timestamp) for t in toks)))
            for p, toks in sorted(self.tokens.items())
            if toks
        ) + (("@clock", self.clock),)

    def with_tokens(self, changes: dict[str, tuple[ColorToken, ...]], clock: Optional[int] = None) -> "Marking":
        tokens = dict(self.tokens)
        tokens.update(changes)
        index = {k: v for k, v in self._index.items() if k[0] not in changes}
        return Marking(tokens, self.clock if clock is None else clock, index)

    def at(self, clock: int) -> "Marking":
        return Marking(self.tokens, clock, self._index)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Marking) and self.timed_key() == other.timed_key()


def make_marking(net: NetModel, initial: dict[str, list], clock: int = 0) -> Marking:
    """Build a marking from ``{place: [Color | (Color, ts) | ColorToken]}``,
    checking each color against its place's color set."""
    tokens: dict[str, tuple[ColorToken, ...]] = {p.id: () for p in net.places}
    for pid, items in initial.items():
        place = net.place_map.get(pid)
        if place is None:
            raise MalformedNet([f"marking references unknown place {pid!r}"])
        toks = []
        for item in items:
            if isinstance(item, ColorToken):
                tok = item
            elif isinstance(item, tuple):
                tok = ColorToken(Color(item[0]), int(item[1]))
            else:
                tok = ColorToken(Color(item), 0)
            check_token(place, tok)
            toks.append(tok)
        tokens[pid] = tuple(toks)
        if place.capacity is not None and len(toks) > place.capacity:
            raise MalformedNet([f"place {pid!r} over capacity in initial marking"])
    return Marking(tokens, clock)


def check_token(place: Place, tok: ColorToken) -> None:
    if tok.timestamp < 0:
        raise ColorMismatch(f"negative timestamp on token for {place.id!r}")
    if not place.conforms(tok.color):
        raise ColorMismatch(f"color {tok.color!r} does not match color set {place.color_set} of {place.id!r}")


EVENT_KINDS = (
    "fire",
    "token-created",
    "token-consumed",
    "failure",
    "repair",
    "external-command",
    "external-notify",
    "deadlock",
    "horizon",
)


@dataclass(frozen=True)
class SimEvent:
    time: int
    kind: str
    transition_id: Optional[str]
    payload: dict
    priority: int = 0
    seq: int = 0

    def to_record(self) -> dict:
        return {
            "time": self.time,
            "kind": self.kind,
            "transition": self.transition_id,
            "payload": self.payload,
            "priority": self.priority,
            "seq": self.seq,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SimEvent":
        return cls(rec["time"], rec["kind"], rec["transition"], rec["payload"], rec["priority"], rec["seq"])
