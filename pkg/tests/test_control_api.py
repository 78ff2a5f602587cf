"""Control API over real HTTP: reads, mutations, and the event stream."""

import http.client
import json

import pytest

from shadowpatch import appsim
from shadowpatch.control_api import serve_control_api
from shadowpatch.envelopes import RequestEnvelope
from shadowpatch.harness import Pipeline


@pytest.fixture()
def served():
    program, _ = appsim.scripted_fault(appsim.load_shop_program(), "shipping")
    pipe = Pipeline(program=program)
    # one failing + a few clean requests so both feeds have content
    pipe.handle(RequestEnvelope(method="GET", path="/shipping?carrier=promo",
                                session_id="s1"))
    for _ in range(2):
        pipe.handle(RequestEnvelope(method="GET", path="/catalog"))
    server = serve_control_api(pipe.api)
    yield pipe, server
    server.stop()


def call(server, method, path, want=200):
    conn = http.client.HTTPConnection("127.0.0.1", server.port, timeout=10)
    try:
        conn.request(method, path)
        resp = conn.getresponse()
        body = resp.read()
        assert resp.status == want, body
        return json.loads(body), dict(resp.getheaders())
    finally:
        conn.close()


def test_health(served):
    _, server = served
    doc, _ = call(server, "GET", "/health")
    assert doc == {"ok": True}


def test_failures_feed(served):
    pipe, server = served
    rows, _ = call(server, "GET", "/failures")
    assert len(rows) == 1
    assert rows[0]["signature"].startswith("null-deref@shipping_quote")
    assert rows[0]["count"] == 1


def test_patches_feed_matches_ranked_report_and_pagination(served):
    pipe, server = served
    rows, _ = call(server, "GET", "/patches")
    assert [r["id"] for r in rows] == \
        [r["id"] for r in pipe.regression.ranked_report()]
    page, _ = call(server, "GET", "/patches?limit=2&offset=1")
    assert [r["id"] for r in page] == [r["id"] for r in rows[1:3]]


def test_patches_etag_stable_until_state_changes(served):
    pipe, server = served
    _, h1 = call(server, "GET", "/patches")
    _, h2 = call(server, "GET", "/patches")
    assert h1["etag"] == h2["etag"]
    rows, _ = call(server, "GET", "/patches")
    call(server, "POST", f"/patches/{rows[-1]['id']}/reject")
    _, h3 = call(server, "GET", "/patches")
    assert h3["etag"] != h1["etag"]


def test_approve_then_failing_request_succeeds(served):
    pipe, server = served
    rows, _ = call(server, "GET", "/patches")
    surviving = [r for r in rows if r["state"] == "surviving"]
    doc, _ = call(server, "POST", f"/patches/{surviving[0]['id']}/approve")
    assert doc["state"] == "approved"
    resp = pipe.handle(RequestEnvelope(
        method="GET", path="/shipping?carrier=promo", session_id="s1"))
    assert resp.status == 200
    # approve twice -> WrongState
    doc, _ = call(server, "POST",
                  f"/patches/{surviving[0]['id']}/approve", want=409)
    assert doc["error"] == "WrongState"


def test_unknown_patch_and_unknown_route(served):
    _, server = served
    doc, _ = call(server, "POST", "/patches/nope/approve", want=404)
    assert doc["error"] == "UnknownPatch"
    call(server, "POST", "/patches/nope/frobnicate", want=404)
    call(server, "GET", "/nope", want=404)


def test_rejected_patch_disappears_from_feed(served):
    pipe, server = served
    rows, _ = call(server, "GET", "/patches")
    victim = rows[0]["id"]
    call(server, "POST", f"/patches/{victim}/reject")
    rows, _ = call(server, "GET", "/patches")
    assert victim not in [r["id"] for r in rows]


def read_stream(server, path, max_lines):
    conn = http.client.HTTPConnection("127.0.0.1", server.port, timeout=10)
    lines = []
    try:
        conn.request("GET", path)
        resp = conn.getresponse()
        assert resp.getheader("content-type") == "application/x-ndjson"
        while len(lines) < max_lines:
            line = resp.fp.readline()
            if not line:
                break
            line = line.strip()
            if not line or not line.startswith(b"{"):
                continue  # chunk framing
            lines.append(json.loads(line))
    finally:
        conn.close()
    return lines


def test_event_stream_delivers_ordered_rows(served):
    pipe, server = served
    rows = read_stream(server, "/events?limit=5", 5)
    assert [r["seq"] for r in rows] == sorted(r["seq"] for r in rows)
    assert rows[0]["seq"] == 0


def test_event_stream_resumes_from_cursor(served):
    pipe, server = served
    first = read_stream(server, "/events?limit=3", 3)
    cursor = first[-1]["seq"] + 1
    rest = read_stream(server, f"/events?cursor={cursor}&limit=3", 3)
    assert rest[0]["seq"] == cursor


def test_event_stream_heartbeat_when_idle(served):
    pipe, server = served
    cursor = len(pipe.log) + 100  # beyond the log: nothing to deliver
    rows = read_stream(server, f"/events?cursor={cursor}&limit=1", 1)
    assert rows == [{"kind": "heartbeat", "cursor": cursor}]


def test_reads_do_not_mutate(served):
    pipe, server = served
    before = [r["id"] for r in pipe.regression.ranked_report()]
    for _ in range(3):
        call(server, "GET", "/patches")
        call(server, "GET", "/failures")
    assert [r["id"] for r in pipe.regression.ranked_report()] == before
