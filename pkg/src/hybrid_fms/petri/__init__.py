"""Deterministic timed colored Petri-net kernel."""
from .engine import (
    DEADLOCK,
    Enabled,
    EventTrace,
    Simulator,
    advance,
    enabled_bindings,
    fire,
    reachable_markings,
    replay,
    run,
    trace_from_lines,
    validate,
)
from .expr import TRUE, UNIT, And, Color, Const, Eq, Field, Ne, Record, Var, record
from .net import (
    Arc,
    BoundExceeded,
    ColorMismatch,
    ColorToken,
    MalformedNet,
    Marking,
    NetError,
    NetModel,
    NotEnabled,
    Place,
    SimEvent,
    Transition,
    make_marking,
)

__all__ = [name for name in dir() if not name.startswith("_")]
