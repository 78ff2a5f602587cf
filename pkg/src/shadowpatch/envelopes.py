"""Request/response envelopes shared by every component."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Optional

SESSION_HEADER = "x-session"

_request_ids = itertools.count(1)


def next_request_id(prefix: str = "r") -> str:
    return f"{prefix}{next(_request_ids):06d}"


@dataclass
class RequestEnvelope:
    method: str
    path: str  # includes query string
    headers: list = field(default_factory=list)  # ordered (name, value)
    body: bytes = b""
    session_id: Optional[str] = None
    received_at: float = 0.0
    request_id: str = ""

    def __post_init__(self):
        if not self.request_id:
            self.request_id = next_request_id()
        if self.session_id is None:
            self.session_id = self.header(SESSION_HEADER)
        elif self.header(SESSION_HEADER) is None:
            self.headers.append((SESSION_HEADER, self.session_id))

    def header(self, name: str) -> Optional[str]:
        name = name.lower()
        for k, v in self.headers:
            if k.lower() == name:
                return v
        return None

    def with_session(self, session_id: str) -> "RequestEnvelope":
        headers = [
            (k, v) for k, v in self.headers if k.lower() != SESSION_HEADER
        ]
        headers.append((SESSION_HEADER, session_id))
        return RequestEnvelope(
            method=self.method,
            path=self.path,
            headers=headers,
            body=self.body,
            session_id=session_id,
            received_at=self.received_at,
            request_id=self.request_id,
        )

    def wire_line(self) -> str:
        """One-line replayable form: method, path, session, body."""
        body = self.body.decode("utf-8", "replace").replace("\t", " ")
        return f"{self.method}\t{self.path}\t{self.session_id or '-'}\t{body}"

    @classmethod
    def from_wire_line(cls, line: str) -> "RequestEnvelope":
        method, path, session, body = line.rstrip("\n").split("\t", 3)
        return cls(
            method=method,
            path=path,
            session_id=None if session == "-" else session,
            body=body.encode(),
        )


@dataclass
class ResponseEnvelope:
    status: int
    headers: list = field(default_factory=list)
    body: bytes = b""
    produced_at: float = 0.0
    exception_meta: Optional[tuple] = None  # (kind, location) or None

    def __post_init__(self):
        if not self.produced_at:
            self.produced_at = time.monotonic()

    def header(self, name: str) -> Optional[str]:
        name = name.lower()
        for k, v in self.headers:
            if k.lower() == name:
                return v
        return None

    @property
    def is_server_error(self) -> bool:
        return 500 <= self.status <= 599
