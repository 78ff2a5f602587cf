"""Shadower core: return the production response immediately, then route a
duplicate of the request into exactly one of the two shadow queues —
failing requests to the patch service, successful (request, output) pairs
to the regression service.

The client path never blocks on shadow work: queues are bounded and
overflow drops the duplicate (counted, never an error to the client).
Transport is pluggable; `production` is any callable taking a
RequestEnvelope and returning a ProductionAnswer.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .envelopes import RequestEnvelope, ResponseEnvelope
from .events import EventLog


class UpstreamUnreachable(ConnectionError):
    pass


@dataclass
class ProductionAnswer:
    response: ResponseEnvelope
    # In-process extras (absent over plain HTTP): the execution result and
    # the store undo map for pre-state replay in sandboxes.
    result: object = None
    pre_state: Optional[dict] = None


@dataclass
class ShadowerConfig:
    upstream: str = ""
    listen: str = ""
    session_header: str = "x-session"
    patch_queue_capacity: int = 256
    regression_queue_capacity: int = 1024

    @classmethod
    def load(cls, path) -> "ShadowerConfig":
        return cls.parse(open(path, encoding="utf-8").read())

    @classmethod
    def parse(cls, text: str) -> "ShadowerConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if not hasattr(cfg, key):
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            if key.endswith("capacity"):
                value = int(value)
            setattr(cfg, key, value)
        return cfg


class SessionMap:
    """Per-target bijection client-session-id <-> shadow-session-id."""

    def __init__(self):
        self._lock = threading.Lock()
        self._fwd = {}  # target -> {client: shadow}
        self._rev = {}  # target -> {shadow: client}

    def lookup(self, target: str, client_sid: str) -> Optional[str]:
        with self._lock:
            return self._fwd.get(target, {}).get(client_sid)

    def record(self, target: str, client_sid: str, shadow_sid: str) -> None:
        with self._lock:
            fwd = self._fwd.setdefault(target, {})
            rev = self._rev.setdefault(target, {})
            old = fwd.get(client_sid)
            if old is not None:
                rev.pop(old, None)
            if shadow_sid in rev and rev[shadow_sid] != client_sid:
                raise ValueError(
                    f"shadow session {shadow_sid!r} already mapped")
            fwd[client_sid] = shadow_sid
            rev[shadow_sid] = client_sid


class Shadower:
    TARGETS = ("patch", "regression")

    def __init__(self, production, patch_sink, regression_sink,
                 log: EventLog = None, patch_capacity: int = 256,
                 regression_capacity: int = 1024):
        self.production = production
        self.sinks = {"patch": patch_sink, "regression": regression_sink}
        self.log = log if log is not None else EventLog()
        self.capacity = {"patch": patch_capacity,
                         "regression": regression_capacity}
        self.queues = {t: deque() for t in self.TARGETS}
        self.drops = {t: 0 for t in self.TARGETS}
        self.failure_counts = {}
        self.sessions = SessionMap()
        self._lock = threading.Lock()
        self._wakeup = threading.Condition(self._lock)
        self._workers = []
        self._stopping = False

    # -- Algorithm-1 request path --

    def handle_request(self, r: RequestEnvelope) -> ResponseEnvelope:
        t0 = time.perf_counter()
        try:
            answer = self.production(r)
        except (ConnectionError, OSError) as exc:
            resp = ResponseEnvelope(status=502,
                                    body=f"upstream: {exc}".encode())
            self.log.append("routing", request_id=r.request_id, branch="none",
                            status=502)
            return resp
        resp = answer.response
        latency_ms = (time.perf_counter() - t0) * 1000.0
        failing = resp.is_server_error
        branch = "patch" if failing else "regression"
        if failing and resp.exception_meta is not None:
            kind, location = resp.exception_meta
            sig = f"{kind}@{location}"
            with self._lock:
                self.failure_counts[sig] = self.failure_counts.get(sig, 0) + 1
        self._enqueue(branch, (self.translate_session(branch, r), answer))
        self.log.append("routing", request_id=r.request_id, branch=branch,
                        status=resp.status, latency_ms=round(latency_ms, 3))
        return resp

    def _enqueue(self, target: str, item) -> None:
        with self._lock:
            if len(self.queues[target]) >= self.capacity[target]:
                self.drops[target] += 1
                self.log.append("drop", target=target,
                                dropped=self.drops[target])
                return
            self.queues[target].append(item)
            self._wakeup.notify_all()

    # -- session translation --

    def translate_session(self, target: str,
                          r: RequestEnvelope) -> RequestEnvelope:
        if r.session_id is None:
            return r
        shadow_sid = self.sessions.lookup(target, r.session_id)
        if shadow_sid is None:
            return r
        return r.with_session(shadow_sid)

    def observe_target_session(self, target: str, client_sid: str,
                               shadow_sid: str) -> None:
        """A shadow target's response set a session id: learn the mapping."""
        self.sessions.record(target, client_sid, shadow_sid)

    # -- queue consumption --

    def drain(self) -> int:
        """Synchronously deliver every queued duplicate (deterministic
        mode; do not mix with running workers). Returns items delivered."""
        delivered = 0
        while True:
            item = None
            target = None
            with self._lock:
                for t in self.TARGETS:
                    if self.queues[t]:
                        target = t
                        item = self.queues[t].popleft()
                        break
            if item is None:
                return delivered
            self._deliver(target, item)
            delivered += 1

    def _deliver(self, target: str, item) -> None:
        req, answer = item
        try:
            if target == "patch":
                self.sinks["patch"](req, answer)
            else:
                self.sinks["regression"](req, answer)
        except Exception as exc:  # sink errors never reach the client path
            self.log.append("sink-error", target=target,
                            request_id=req.request_id, error=repr(exc))

    def start_workers(self) -> None:
        self._stopping = False
        for target in self.TARGETS:
            th = threading.Thread(target=self._worker, args=(target,),
                                  daemon=True, name=f"shadow-{target}")
            self._workers.append(th)
            th.start()

    def stop_workers(self) -> None:
        with self._lock:
            self._stopping = True
            self._wakeup.notify_all()
        for th in self._workers:
            th.join(timeout=5)
        self._workers = []

    def _worker(self, target: str) -> None:
        while True:
            with self._lock:
                while not self.queues[target] and not self._stopping:
                    self._wakeup.wait(timeout=0.5)
                if self._stopping and not self.queues[target]:
                    return
                item = self.queues[target].popleft()
            self._deliver(target, item)


@dataclass
class OverheadReport:
    requests: int
    mean_direct_ms: float
    mean_proxied_ms: float

    @property
    def overhead_pct(self) -> float:
        if self.mean_direct_ms == 0:
            return 0.0
        return (self.mean_proxied_ms - self.mean_direct_ms) \
            / self.mean_direct_ms * 100.0

    def as_dict(self):
        return {
            "requests": self.requests,
            "mean_direct_ms": round(self.mean_direct_ms, 4),
            "mean_proxied_ms": round(self.mean_proxied_ms, 4),
            "overhead_pct": round(self.overhead_pct, 2),
        }


def measure_overhead(direct, proxied, requests) -> OverheadReport:
    """Issue the same request sequence sequentially through both call
    paths and compare mean latencies."""
    requests = list(requests)

    def mean_ms(fn):
        t0 = time.perf_counter()
        for r in requests:
            fn(r)
        return (time.perf_counter() - t0) * 1000.0 / len(requests)

    return OverheadReport(
        requests=len(requests),
        mean_direct_ms=mean_ms(direct),
        mean_proxied_ms=mean_ms(proxied),
    )
