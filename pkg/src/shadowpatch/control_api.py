"""Operator-facing HTTP JSON API: live failures, ranked patches, and
approve/reject actions that steer the running production program.

Endpoint reference: docs/formats.md. Reads are snapshots; approve/reject
are the only mutators and serialize through one lock.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .patch_service import PatchService
from .regression_service import RegressionService, UnknownPatch, WrongState


class ControlApi:
    def __init__(self, patch_service: PatchService,
                 regression_service: RegressionService, log,
                 heartbeat_s: float = 1.0):
        self.patch_service = patch_service
        self.regression = regression_service
        self.log = log
        self.heartbeat_s = heartbeat_s
        self._mutate = threading.Lock()

    # -- reads --

    def failures(self) -> list:
        return self.patch_service.failure_summaries()

    def patches(self, limit: int = None, offset: int = 0) -> list:
        rows = self.regression.ranked_report()
        if offset:
            rows = rows[offset:]
        if limit is not None:
            rows = rows[:limit]
        return rows

    # -- mutations --

    def approve(self, patch_id: str) -> dict:
        with self._mutate:
            patch = self.regression.approve(patch_id)
        return {"id": patch.id, "state": patch.state}

    def reject(self, patch_id: str) -> dict:
        with self._mutate:
            patch = self.regression.reject(patch_id)
        return {"id": patch.id, "state": patch.state}


class _ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True
    api: ControlApi = None  # set by subclassing in serve_control_api

    def log_message(self, fmt, *args):
        pass

    # -- plumbing --

    def _send_json(self, status: int, doc, etag: str = None) -> None:
        body = json.dumps(doc, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("content-type", "application/json")
        if etag:
            self.send_header("etag", etag)
        self.send_header("content-length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _query(self) -> dict:
        if "?" not in self.path:
            return {}
        out = {}
        for pair in self.path.split("?", 1)[1].split("&"):
            if "=" in pair:
                k, v = pair.split("=", 1)
                out[k] = v
        return out

    def _route(self) -> str:
        return self.path.split("?", 1)[0]

    # -- verbs --

    def do_GET(self):
        route = self._route()
        if route == "/failures":
            self._send_json(200, self.api.failures())
        elif route == "/patches":
            q = self._query()
            rows = self.api.patches(
                limit=int(q["limit"]) if "limit" in q else None,
                offset=int(q.get("offset", 0)))
            etag = hashlib.sha256(
                json.dumps(rows, sort_keys=True).encode()).hexdigest()[:16]
            self._send_json(200, rows, etag=etag)
        elif route == "/events":
            self._stream_events()
        elif route == "/health":
            self._send_json(200, {"ok": True})
        else:
            self._send_json(404, {"error": "NotFound"})

    def do_POST(self):
        route = self._route()
        parts = [p for p in route.split("/") if p]
        if len(parts) == 3 and parts[0] == "patches" \
                and parts[2] in ("approve", "reject"):
            action = getattr(self.api, parts[2])
            try:
                self._send_json(200, action(parts[1]))
            except UnknownPatch:
                self._send_json(404, {"error": "UnknownPatch"})
            except WrongState as exc:
                self._send_json(409, {"error": "WrongState",
                                      "detail": str(exc)})
            return
        self._send_json(404, {"error": "NotFound"})

    # -- event stream --

    def _stream_events(self):
        q = self._query()
        cursor = int(q.get("cursor", 0))
        # `limit` caps delivered records then closes (handy for curl/tests);
        # without it the stream runs until the client disconnects.
        limit = int(q["limit"]) if "limit" in q else None
        self.send_response(200)
        self.send_header("content-type", "application/x-ndjson")
        self.send_header("transfer-encoding", "chunked")
        self.end_headers()
        sent = 0
        try:
            while True:
                rows = self.api.log.since(cursor)
                if rows:
                    for row in rows:
                        self._chunk(json.dumps(row, sort_keys=True))
                        cursor = row["seq"] + 1
                        sent += 1
                        if limit is not None and sent >= limit:
                            self._chunk_end()
                            return
                else:
                    self._chunk(json.dumps(
                        {"kind": "heartbeat", "cursor": cursor}))
                    if limit is not None:
                        self._chunk_end()
                        return
                time.sleep(self.api.heartbeat_s if not rows else 0)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def _chunk(self, line: str) -> None:
        data = (line + "\n").encode()
        self.wfile.write(f"{len(data):x}\r\n".encode() + data + b"\r\n")
        self.wfile.flush()

    def _chunk_end(self) -> None:
        self.wfile.write(b"0\r\n\r\n")
        self.wfile.flush()


class ControlApiServer:
    def __init__(self, api: ControlApi, port: int = 0):
        handler = type("Handler", (_ApiHandler,), {"api": api})
        self.server = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.port = self.server.server_address[1]
        self._thread = None

    def start(self) -> int:
        self._thread = threading.Thread(target=self.server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self.port

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def serve_control_api(api: ControlApi, port: int = 0) -> ControlApiServer:
    server = ControlApiServer(api, port)
    server.start()
    return server
