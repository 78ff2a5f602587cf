"""Shared key-value store and sandbox-enforcing handles.

The base store is mutated only through ReadWrite handles (atomic per
statement, guarded by a lock). OverlayReadOnly handles buffer writes in a
per-request overlay that shadows base reads and is discarded with the
handle, so arbitrary sandboxed executions can never touch the base.
"""

from __future__ import annotations

import hashlib
import threading

from . import values


class Store:
    """Base store shared by the production app and all sandboxes."""

    def __init__(self, data=None):
        self._data = {}
        self._lock = threading.Lock()
        if data:
            for k, v in data.items():
                self._data[k] = values.deep_copy(v)

    def snapshot_text(self) -> str:
        """Sorted key/value text form, one entry per line."""
        with self._lock:
            lines = [
                f"{k}\t{values.to_json(self._data[k])}"
                for k in sorted(self._data)
            ]
        return "\n".join(lines) + ("\n" if lines else "")

    def digest(self) -> str:
        return hashlib.sha256(self.snapshot_text().encode()).hexdigest()

    # internal accessors used by handles
    def _get(self, key):
        with self._lock:
            if key in self._data:
                return values.deep_copy(self._data[key])
        return None

    def _put(self, key, value):
        with self._lock:
            self._data[key] = values.deep_copy(value)

    def _has(self, key):
        with self._lock:
            return key in self._data


class ReadWriteHandle:
    mode = "ReadWrite"

    def __init__(self, base: Store):
        self.base = base
        self.write_log = []
        # First-write-wins map of overwritten values; seeding a sandbox
        # overlay with it reconstructs the pre-request store state.
        self.undo = {}

    def get(self, key: str):
        return self.base._get(key)

    def put(self, key: str, value) -> None:
        if key not in self.undo:
            self.undo[key] = self.base._get(key)
        self.base._put(key, value)
        self.write_log.append((key, values.deep_copy(value)))


class OverlayReadOnlyHandle:
    """Reads see overlay-over-base; writes land only in the overlay."""

    mode = "OverlayReadOnly"

    def __init__(self, base: Store):
        self.base = base
        self.overlay = {}
        self.write_log = []

    def get(self, key: str):
        if key in self.overlay:
            return values.deep_copy(self.overlay[key])
        return self.base._get(key)

    def put(self, key: str, value) -> None:
        self.overlay[key] = values.deep_copy(value)
        self.write_log.append((key, values.deep_copy(value)))
