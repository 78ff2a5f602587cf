"""Plain HTTP/1.1 plumbing: the production app server, the shadower proxy
server, and a small persistent-connection client used by experiments."""

from __future__ import annotations

import http.client
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer



from .envelopes import SESSION_HEADER, RequestEnvelope, ResponseEnvelope
from .hlang.interp import ExecLimits, NoRouteMatch, execute, match_route
from .runtime import ProgramRef
from .shadower import ProductionAnswer, Shadower, UpstreamUnreachable
from .store import ReadWriteHandle, Store

ERROR_KIND_HEADER = "x-error-kind"
ERROR_LOCATION_HEADER = "x-error-location"
ROUTE_TEMPLATE_HEADER = "x-route-template"

# Hop-by-hop and auto-generated headers: never echoed from a proxied
# response (the server layer emits its own; duplicates break strict
# HTTP/1.1 clients).
_NOT_FORWARDED = {"content-length", "transfer-encoding", "connection",
                  "keep-alive", "date", "server"}


def execute_production(program_ref: ProgramRef, store: Store,
                       r: RequestEnvelope,
                       limits: ExecLimits = None) -> ProductionAnswer:
    """The unmodified production application, as a callable: execute against
    the live store, echo failure metadata in headers."""
    program = program_ref.get()
    try:
        route, _ = match_route(program, r.method, r.path)
    except NoRouteMatch:
        return ProductionAnswer(
            response=ResponseEnvelope(status=404, body=b"no route"))
    handle = ReadWriteHandle(store)
    result = execute(program, r, handle, limits)
    if result.ok:
        resp = result.response
        resp.headers.append((ROUTE_TEMPLATE_HEADER, route.pattern))
        if r.session_id:
            resp.headers.append((SESSION_HEADER, r.session_id))
    else:
        exc = result.exception
        loc = "{}:{}:{}".format(*exc.location)
        resp = ResponseEnvelope(
            status=500,
            headers=[
                (ERROR_KIND_HEADER, exc.kind),
                (ERROR_LOCATION_HEADER, loc),
                (ROUTE_TEMPLATE_HEADER, route.pattern),
            ],
            body=f"internal error: {exc.kind} at {loc}".encode(),
            exception_meta=(exc.kind, exc.location),
        )
    return ProductionAnswer(response=resp, result=result,
                            pre_state=handle.undo)


class _QuietHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    # Nagle + delayed ACK costs tens of ms per loopback round trip.
    disable_nagle_algorithm = True

    def log_message(self, fmt, *args):  # silence stderr chatter
        pass

    def _read_envelope(self) -> RequestEnvelope:
        length = int(self.headers.get("content-length", 0) or 0)
        body = self.rfile.read(length) if length else b""
        return RequestEnvelope(
            method=self.command,
            path=self.path,
            headers=[(k.lower(), v) for k, v in self.headers.items()],
            body=body,
        )

    def _write_envelope(self, resp: ResponseEnvelope) -> None:
        self.send_response(resp.status)
        for k, v in resp.headers:
            if k.lower() not in _NOT_FORWARDED:
                self.send_header(k, v)
        self.send_header("content-length", str(len(resp.body)))
        self.end_headers()
        self.wfile.write(resp.body)


def _make_handler(callback):
    class Handler(_QuietHandler):
        def _serve(self):
            self._write_envelope(callback(self._read_envelope()))

        do_GET = do_POST = do_PUT = do_DELETE = _serve

    return Handler


class HttpHost:
    """A ThreadingHTTPServer wrapper serving RequestEnvelope -> callback."""

    def __init__(self, callback, port: int = 0):
        self.server = ThreadingHTTPServer(("127.0.0.1", port),
                                          _make_handler(callback))
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


class HttpClient:
    """Persistent-connection client for sequential request replay."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._conn = None

    def _connection(self):
        if self._conn is None:
            self._conn = http.client.HTTPConnection(self.host, self.port)
            self._conn.connect()
            self._conn.sock.setsockopt(socket.IPPROTO_TCP,
                                       socket.TCP_NODELAY, 1)
        return self._conn

    def call(self, r: RequestEnvelope) -> ResponseEnvelope:
        headers = dict(r.headers)
        if r.body:
            headers.setdefault("content-length", str(len(r.body)))
        for attempt in (0, 1):
            conn = self._connection()
            try:
                conn.request(r.method, r.path, body=r.body or None,
                             headers=headers)
                raw = conn.getresponse()
                body = raw.read()
                return ResponseEnvelope(
                    status=raw.status,
                    headers=[(k.lower(), v) for k, v in raw.getheaders()],
                    body=body,
                    exception_meta=_parse_exception_meta(raw),
                )
            except (http.client.HTTPException, ConnectionError, OSError):
                self.close()
                if attempt:
                    raise
        raise UpstreamUnreachable(f"{self.host}:{self.port}")

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None


def _parse_exception_meta(raw):
    kind = raw.getheader(ERROR_KIND_HEADER)
    loc = raw.getheader(ERROR_LOCATION_HEADER)
    if not kind or not loc:
        return None
    method, block, idx = loc.rsplit(":", 2)
    return (kind, (method, int(block), int(idx)))


class ProxyUpstream:
    """Thread-safe production callable forwarding over HTTP, with one
    persistent connection per serving thread."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._local = threading.local()

    def __call__(self, r: RequestEnvelope) -> ProductionAnswer:
        client = getattr(self._local, "client", None)
        if client is None:
            client = HttpClient(self.host, self.port)
            self._local.client = client
        return ProductionAnswer(response=client.call(r))


def serve_app(program_ref: ProgramRef, store: Store, port: int = 0,
              limits: ExecLimits = None) -> HttpHost:
    def callback(r):
        return execute_production(program_ref, store, r, limits).response

    return HttpHost(callback, port)


def serve_shadower(shadower: Shadower, port: int = 0) -> HttpHost:
    return HttpHost(shadower.handle_request, port)
