"""Token colors and the declarative expression language used by guards,
arc expressions and transition delays.

Expressions are small frozen trees so a net can be written to and read
back from the XML model format without compiling any code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Union

Value = Union[int, str, bool]


class Color(dict):
    """Immutable, hashable record of named fields carried by a token."""

    __slots__ = ("_hash", "_key")

    def __init__(self, *args: Any, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        for v in dict.values(self):
            _rank(v)  # reject unsupported values early
        self._key = None
        self._hash = None

    def key(self) -> tuple:
        """Total-order key used for canonical binding order."""
        if self._key is None:
            self._key = tuple(sorted((k, _rank(v)) for k, v in dict.items(self)))
        return self._key

    def __hash__(self) -> int:  # type: ignore[override]
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Color):
            return self is other or self.key() == other.key()
        return NotImplemented

    def __ne__(self, other: object) -> bool:
        if isinstance(other, Color):
            return not self.__eq__(other)
        return NotImplemented

    def __lt__(self, other: "Color") -> bool:  # type: ignore[override]
        return self.key() < other.key()

    def __reduce__(self):
        return (Color, (dict(self),))

    def _readonly(self, *args: Any, **kwargs: Any) -> None:
        raise TypeError("Color is immutable")

    __setitem__ = __delitem__ = _readonly  # type: ignore[assignment]
    update = clear = pop = popitem = setdefault = _readonly  # type: ignore[assignment]

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in sorted(dict.items(self)))
        return f"Color({inner})"


def _rank(v: Any) -> tuple:
    # bool before int before str so mixed-type fields still sort deterministically
    if isinstance(v, bool):
        return (0, int(v))
    if isinstance(v, int):
        return (1, v)
    if isinstance(v, str):
        return (2, v)
    raise TypeError(f"unsupported color field value {v!r}")


UNIT = Color()


@dataclass(frozen=True)
class Const:
    value: Value


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Field:
    var: str
    key: str


@dataclass(frozen=True)
class Eq:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Ne:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    terms: tuple = ()


@dataclass(frozen=True)
class Record:
    """Builds a new color; ``fields`` is a tuple of (name, expr) pairs."""

    fields: tuple = ()


Expr = Union[Const, Var, Field, Eq, Ne, And, Record]

TRUE = And(())


def record(**fields: Expr) -> Record:
    return Record(tuple(sorted(fields.items())))


def free_vars(expr: Expr) -> frozenset[str]:
    if isinstance(expr, Const):
        return frozenset()
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Field):
        return frozenset((expr.var,))
    if isinstance(expr, (Eq, Ne)):
        return free_vars(expr.left) | free_vars(expr.right)
    if isinstance(expr, And):
        out: frozenset[str] = frozenset()
        for t in expr.terms:
            out |= free_vars(t)
        return out
    if isinstance(expr, Record):
        out = frozenset()
        for _, e in expr.fields:
            out |= free_vars(e)
        return out
    raise TypeError(f"not an expression: {expr!r}")


def evaluate(expr: Expr, env: Mapping[str, Color]) -> Any:
    if isinstance(expr, Field):
        return env[expr.var][expr.key]
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Eq):
        return evaluate(expr.left, env) == evaluate(expr.right, env)
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, And):
        return all(evaluate(t, env) for t in expr.terms)
    if isinstance(expr, Ne):
        return evaluate(expr.left, env) != evaluate(expr.right, env)
    if isinstance(expr, Record):
        return Color({k: evaluate(e, env) for k, e in expr.fields})
    raise TypeError(f"not an expression: {expr!r}")


def compile_expr(expr: Expr) -> Callable[[Mapping[str, Color]], Any]:
    """Closure equivalent of ``lambda env: evaluate(expr, env)``."""
    if isinstance(expr, Field):
        var, key = expr.var, expr.key
        return lambda env: env[var][key]
    if isinstance(expr, Const):
        value = expr.value
        return lambda env: value
    if isinstance(expr, Var):
        name = expr.name
        return lambda env: env[name]
    if isinstance(expr, (Eq, Ne)):
        neg = isinstance(expr, Ne)
        if isinstance(expr.left, Field) and isinstance(expr.right, Const):
            var, key, value = expr.left.var, expr.left.key, expr.right.value
            return (lambda env: env[var][key] != value) if neg else (lambda env: env[var][key] == value)
        left, right = compile_expr(expr.left), compile_expr(expr.right)
        return (lambda env: left(env) != right(env)) if neg else (lambda env: left(env) == right(env))
    if isinstance(expr, And):
        terms = tuple(compile_expr(t) for t in expr.terms)
        if not terms:
            return lambda env: True
        if len(terms) == 1:
            return terms[0]

        def conj(env: Mapping[str, Color]) -> bool:
            for t in terms:
                if not t(env):
                    return False
            return True

        return conj
    if isinstance(expr, Record):
        items = tuple((k, compile_expr(e)) for k, e in expr.fields)
        return lambda env: Color({k: f(env) for k, f in items})
    raise TypeError(f"not an expression: {expr!r}")


def conjuncts(guard: Expr) -> list[Expr]:
    """Flatten nested conjunctions into a list of atoms."""
    if isinstance(guard, And):
        out: list[Expr] = []
        for t in guard.terms:
            out.extend(conjuncts(t))
        return out
    return [guard]


def all_of(terms: Iterable[Expr]) -> And:
    return And(tuple(terms))
