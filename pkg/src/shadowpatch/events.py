"""Append-only event log shared by every component.

One JSON-lines record per event; `seq` is the only ordering. Records carry
no wall-clock timestamps so logs from seeded runs are byte-identical.
"""

from __future__ import annotations

import json
import threading


def failure_signature(kind: str, location, route_template: str) -> str:
    method, block, idx = location
    return f"{kind}@{method}:b{block}:s{idx}@{route_template}"


class EventLog:
    def __init__(self):
        self._lock = threading.Lock()
        self._rows = []

    def append(self, kind: str, **fields) -> dict:
        with self._lock:
            row = {"seq": len(self._rows), "kind": kind}
            row.update(fields)
            self._rows.append(row)
            return row

    def __len__(self):
        return len(self._rows)

    def since(self, cursor: int) -> list:
        """All rows with seq >= cursor (snapshot)."""
        with self._lock:
            return list(self._rows[cursor:])

    def rows(self, kind: str = None) -> list:
        with self._lock:
            rows = list(self._rows)
        if kind is None:
            return rows
        return [r for r in rows if r["kind"] == kind]

    def serialize(self) -> str:
        return "".join(
            json.dumps(r, sort_keys=True) + "\n" for r in self.rows())
