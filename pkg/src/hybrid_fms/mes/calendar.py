"""Resource calendars and allocations."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field



class OverlapConflict(RuntimeError):
    pass


@dataclass(frozen=True)
class Allocation:
    task_id: str
    station: str
    resources: tuple[str, ...]
    start: int
    end: int

    def to_payload(self) -> dict:
        return {
            "task_id": self.task_id,
            "station": self.station,
            "resources": list(self.resources),
            "start": self.start,
            "end": self.end,
        }

    @classmethod
    def from_payload(cls, d: dict) -> "Allocation":
        return cls(d["task_id"], d["station"], tuple(d["resources"]), d["start"], d["end"])


@dataclass
class ResourceCalendar:
    """Committed [start, end) intervals per resource. Planned ends can be
    stretched (failures) or shortened once the actual end is known."""

    intervals: dict[str, list[list]] = field(default_factory=dict)

    def next_free(self, resource: str, after: int) -> int:
        ivs = self.intervals.get(resource, [])
        # intervals are sorted and disjoint, so the last one ends latest
        return max(after, ivs[-1][1]) if ivs else after

    def commit(self, resource: str, start: int, end: int, task_id: str) -> None:
        if end < start:
            raise ValueError("interval ends before it starts")
        ivs = self.intervals.setdefault(resource, [])
        i = bisect.bisect_right(ivs, start, key=lambda iv: iv[0])
        for j in (i - 1, i):
            if 0 <= j < len(ivs) and _overlaps(ivs[j][0], ivs[j][1], start, end):
                raise OverlapConflict(f"{resource}: [{start},{end}) overlaps {ivs[j][2]} [{ivs[j][0]},{ivs[j][1]})")
        ivs.insert(i, [start, end, task_id])

    def close(self, resource: str, task_id: str, end: int) -> None:
        """Record the actual end of a task's interval."""
        ivs = self.intervals.get(resource, [])
        for k in range(len(ivs) - 1, -1, -1):
            if ivs[k][2] == task_id:
                nxt = ivs[k + 1][0] if k + 1 < len(ivs) else None
                if nxt is not None and end > nxt:
                    raise OverlapConflict(f"{resource}: {task_id} runs into the next booking")
                ivs[k][1] = end
                return
        raise KeyError(f"{task_id} holds no interval on {resource}")

    def overlaps(self) -> list[tuple[str, str, str]]:
        out = []
        for res, ivs in self.intervals.items():
            for a, b in zip(ivs, ivs[1:]):
                if _overlaps(a[0], a[1], b[0], b[1]):
                    out.append((res, a[2], b[2]))
        return out


def _overlaps(s1: int, e1: int, s2: int, e2: int) -> bool:
    # zero-length bookings never collide
    return s1 < e2 and s2 < e1


def allocate(
    calendar: ResourceCalendar,
    task_id: str,
    station: str,
    resources: tuple[str, ...],
    interval: tuple[int, int],
    databases: tuple = (),
    seq: int = 0,
) -> Allocation:
    """Commit ``interval`` on every resource and record the allocation in the
    given databases. Raises OverlapConflict on a double booking."""
    start, end = interval
    done: list[str] = []
    try:
        for r in resources:
            calendar.commit(r, start, end, task_id)
            done.append(r)
    except OverlapConflict:
        for r in done:
            calendar.intervals[r] = [iv for iv in calendar.intervals[r] if iv[2] != task_id]
        raise
    alloc = Allocation(task_id, station, tuple(resources), start, end)
    for db in databases:
        db.write(f"allocation/{task_id}", alloc.to_payload(), start, seq)
    return alloc


def fifo_interval(calendar: ResourceCalendar, resource: str, now: int, duration: int) -> tuple[int, int]:
    start = calendar.next_free(resource, now)
    return start, start + duration


