"""Capability-based knowledge model: which resource can do what, and
which stations can serve a task."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..fms.model import (
    ASSEMBLY,
    CNC,
    CRANE,
    LASER,
    RESOURCE_STATION,
    FmsConfig,
)


class NoCapableStation(LookupError):
    pass


@dataclass(frozen=True)
class CapabilityRecord:
    resource: str
    capability: str
    parameters: Mapping[str, int] = field(default_factory=dict)

    @property
    def station(self) -> str:
        return RESOURCE_STATION[self.resource]


def default_capabilities(cfg: FmsConfig, overrides: Optional[dict[str, tuple[str, ...]]] = None) -> list[CapabilityRecord]:
    recs = [CapabilityRecord(CNC, "milling", {"process_time": cfg.cnc_time})]
    recs += [CapabilityRecord(c, "transport", {"process_time": cfg.transport_time}) for c in cfg.carriers]
    recs += [
        CapabilityRecord(ASSEMBLY, "assembly", {"process_time": cfg.assembly_time}),
        CapabilityRecord(LASER, "inspection", {"process_time": 0}),
        CapabilityRecord(CRANE, "storage", {"process_time": 0}),
    ]
    if overrides:
        recs = [r for r in recs if r.resource not in overrides]
        for res, caps in sorted(overrides.items()):
            if res not in RESOURCE_STATION:
                raise ValueError(f"capability for unknown resource {res!r}")
            recs += [CapabilityRecord(res, c) for c in caps]
    return recs


def capable_resources(capability: str, records: list[CapabilityRecord]) -> list[str]:
    return [r.resource for r in records if r.capability == capability]


def match_capability(
    required: tuple[str, ...] | list[str],
    records: list[CapabilityRecord],
    earliest_start: Optional[Mapping[str, int]] = None,
) -> list[str]:
    """Stations whose resources jointly cover ``required``, ranked by
    (earliest_start, station id). Unknown starts rank last."""
    if not records:
        raise ValueError("no capability records")
    by_station: dict[str, set[str]] = {}
    for r in records:
        by_station.setdefault(r.station, set()).add(r.capability)
    hits = [s for s, caps in by_station.items() if set(required) <= caps]
    if not hits:
        raise NoCapableStation(f"no station offers {sorted(required)}")
    inf = float("inf")
    starts = earliest_start or {}
    return sorted(hits, key=lambda s: (starts.get(s, inf), s))
