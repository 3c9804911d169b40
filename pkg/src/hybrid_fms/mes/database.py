"""Shop and station databases: in-memory maps with an append-only journal."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass(frozen=True)
class DatabaseRecord:
    key: str
    value: Any
    last_updated: int
    seq: int = 0


@dataclass(frozen=True)
class Ack:
    key: str
    applied: bool
    stamp: tuple[int, int]


@dataclass
class Database:
    name: str
    records: dict[str, DatabaseRecord] = field(default_factory=dict)
    journal: list[DatabaseRecord] = field(default_factory=list)
    next_seq: int = 0

    def query(self, key: str) -> Optional[DatabaseRecord]:
        return self.records.get(key)

    def write(self, key: str, value: Any, time: int, seq: Optional[int] = None) -> Ack:
        """Last writer wins by (time, seq); stale writes are journalled but
        not applied. Without an explicit ``seq`` the database stamps its own
        arrival counter, which follows delivery order."""
        if seq is None:
            seq = self.next_seq
        self.next_seq = max(self.next_seq, seq + 1)
        rec = DatabaseRecord(key, value, time, seq)
        self.journal.append(rec)
        cur = self.records.get(key)
        if cur is not None and (cur.last_updated, cur.seq) > (time, seq):
            return Ack(key, False, (cur.last_updated, cur.seq))
        self.records[key] = rec
        return Ack(key, True, (time, seq))

    def journal_lines(self) -> bytes:
        return b"".join(
            json.dumps(
                {"db": self.name, "key": r.key, "value": r.value, "time": r.last_updated, "seq": r.seq},
                sort_keys=True,
                separators=(",", ":"),
            ).encode()
            + b"\n"
            for r in self.journal
        )


def query_database(db: Database, key: str) -> Optional[DatabaseRecord]:
    """Missing keys are a negative result (None), never an error."""
    return db.query(key)


def write_database(db: Database, key: str, value: Any, time: int = 0, seq: Optional[int] = None) -> Ack:
    return db.write(key, value, time, seq)
