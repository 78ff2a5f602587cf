"""Patch service: failure intake, exploration, and classification."""

import pytest

from shadowpatch import appsim
from shadowpatch.envelopes import RequestEnvelope
from shadowpatch.events import EventLog
from shadowpatch.patch_service import (
    PatchService,
    ReExecutionMismatch,
    UnknownSignature,
)
from shadowpatch.runtime import ProgramRef


def shipping_service():
    program, _ = appsim.scripted_fault(appsim.load_shop_program(), "shipping")
    log = EventLog()
    service = PatchService(ProgramRef(program), appsim.initial_store(), log)
    return service, log


def promo_request():
    return RequestEnvelope(method="GET", path="/shipping?carrier=promo",
                           session_id="s1")


def test_first_failure_explores_and_returns_valid_patches():
    service, log = shipping_service()
    valid = service.on_failing_request(promo_request())
    assert valid
    assert all(p.state == "valid" for p in valid)
    sigs = service.signatures()
    assert sigs == ["null-deref@shipping_quote:b0:s1@/shipping"]
    report = service.classification_report(sigs[0])
    rec = service.records[sigs[0]]
    for model, counts in report.items():
        space = rec.spaces[model]
        assert counts["valid"] + counts["invalid"] == len(space.patches)
    assert log.rows("patch-classified")


def test_repeat_failures_count_but_do_not_re_explore():
    service, _ = shipping_service()
    first = service.on_failing_request(promo_request())
    ids = [p.id for p in service.records[service.signatures()[0]].patches]
    for _ in range(4):
        assert service.on_failing_request(promo_request()) == []
    sig = service.signatures()[0]
    assert service.failure_count_of(sig) == 5
    again = [p.id for p in service.records[sig].patches]
    assert again == ids
    assert len(first) > 0


def test_unreproducible_request_raises_and_logs():
    service, log = shipping_service()
    healthy = RequestEnvelope(method="GET", path="/health")
    with pytest.raises(ReExecutionMismatch):
        service.on_failing_request(healthy)
    assert log.rows("unreproducible")
    assert service.signatures() == []


def test_classification_report_unknown_signature():
    service, _ = shipping_service()
    with pytest.raises(UnknownSignature):
        service.classification_report("nope")


def test_sink_receives_each_valid_patch_once():
    service, _ = shipping_service()
    seen = []
    service.sink = lambda patch, patched: seen.append(patch.id)
    valid = service.on_failing_request(promo_request())
    assert seen == [p.id for p in valid]
    service.on_failing_request(promo_request())
    assert len(seen) == len(valid)


def test_non_null_failures_get_empty_null_recovery_space():
    # a cart holding an unknown product makes checkout throw explicitly
    store = appsim.initial_store()
    from shadowpatch.store import ReadWriteHandle
    ReadWriteHandle(store).put(
        "cart:s1", {"items": [{"product": "ghost", "qty": 1}]})
    service = PatchService(ProgramRef(appsim.load_shop_program()), store)
    service.on_failing_request(
        RequestEnvelope(method="POST", path="/checkout", session_id="s1"))
    sig = service.signatures()[0]
    rec = service.records[sig]
    assert sig.startswith("explicit-throw@cart_total")
    assert rec.spaces["null-recovery"].patches == []
    assert len(rec.spaces["exception-stopper"].patches) > 0


def test_failure_summaries_sorted_by_count():
    service, _ = shipping_service()
    service.on_failing_request(promo_request())
    service.on_failing_request(promo_request())
    rows = service.failure_summaries()
    assert rows[0]["count"] == 2
    assert rows[0]["explored"]
    assert "null-recovery" in rows[0]["patch_counts"]
