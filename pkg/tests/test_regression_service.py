"""Regression service: queue semantics, divergence removal, counts, and
operator approve/reject."""

import pytest

from shadowpatch import appsim, patches
from shadowpatch.envelopes import RequestEnvelope, ResponseEnvelope
from shadowpatch.events import EventLog
from shadowpatch.hlang.interp import ExecLimits, execute
from shadowpatch.hlang.printer import render_method
from shadowpatch.regression_service import (
    RegressionService,
    UnknownPatch,
    WrongState,
)
from shadowpatch.runtime import ProgramRef, sandbox_execute
from shadowpatch.store import ReadWriteHandle


def make_service(program=None, oracle="content", limits=None):
    program = program or appsim.load_shop_program()
    log = EventLog()
    service = RegressionService(ProgramRef(program), appsim.initial_store(),
                                oracle=oracle, log=log, limits=limits)
    return service, log


def production(service, r):
    """Run r against current production, returning (response, pre_state)."""
    program = service.program_ref.get()
    handle = ReadWriteHandle(service.base_store)
    result = execute(program, r, handle)
    assert result.ok
    return result.response, handle.undo


def human(service, method, source):
    patch = patches.human_patch(method, source)
    return service.validate_human_patch(patch)


def noop_patch(service, method="health"):
    """A behavior-identical patch: replace a method with itself."""
    program = service.program_ref.get()
    return human(service, method,
                 render_method(program.methods[method]) + "\n")


BROKEN_CATALOG = (
    "method browse_catalog(req: record) {\n"
    '  respond(200, "nothing for sale");\n'
    "}\n")

LOOPING_CATALOG = (
    "method browse_catalog(req: record) {\n"
    "  while (true) {\n    skip;\n  }\n"
    "}\n")


def test_unknown_oracle_rejected():
    with pytest.raises(ValueError):
        make_service(oracle="vibes")


def test_push_valid_dedups_by_id():
    service, log = make_service()
    patch = noop_patch(service)
    service.push_valid(patch, service.program_ref.get())
    assert len(service.queue) == 1
    assert len(log.rows("patch-queued")) == 1


def test_surviving_after_first_clean_request_and_counts():
    service, log = make_service()
    patch = noop_patch(service)
    r = RequestEnvelope(method="GET", path="/catalog")
    for i in range(3):
        resp, pre = production(service, r)
        service.on_success_request(r, resp, pre)
        assert patch.regression_success_count == i + 1
    assert patch.state == "surviving"
    # count correctness against the event log
    clean = [row for row in log.rows("regression")
             if row["patch"] == patch.id and not row["diverged"]]
    assert len(clean) == patch.regression_success_count == 3


def test_diverging_patch_removed_as_regressive_and_stays_removed():
    service, log = make_service()
    bad = human(service, "browse_catalog", BROKEN_CATALOG)
    good = noop_patch(service)
    r = RequestEnvelope(method="GET", path="/catalog")
    resp, pre = production(service, r)
    reports = service.on_success_request(r, resp, pre)
    assert [rep.diverged for rep in reports] == [True, False]
    assert bad.state == "regressive"
    assert [qp.patch.id for qp in service.queue] == [good.id]
    # monotone removal: later successes never resurrect it
    resp, pre = production(service, r)
    service.on_success_request(r, resp, pre)
    assert bad.state == "regressive"
    assert bad.id not in [row["id"] for row in service.ranked_report()]


def test_step_limit_overrun_is_regressive():
    service, _ = make_service(limits=ExecLimits(max_steps=2000))
    looper = human(service, "browse_catalog", LOOPING_CATALOG)
    r = RequestEnvelope(method="GET", path="/catalog")
    resp, pre = production(service, r)
    service.on_success_request(r, resp, pre)
    assert looper.state == "regressive"


def test_requests_not_covering_the_patch_do_not_flag_it():
    service, _ = make_service()
    patch = human(service, "browse_catalog", BROKEN_CATALOG)
    r = RequestEnvelope(method="GET", path="/health")
    resp, pre = production(service, r)
    service.on_success_request(r, resp, pre)
    assert patch.state == "surviving"  # /health output identical


def test_approve_hot_swaps_production_and_drops_siblings():
    program, _ = appsim.scripted_fault(appsim.load_shop_program(), "shipping")
    service, _ = make_service(program)
    exc = sandbox_execute(
        program, RequestEnvelope(method="GET",
                                 path="/shipping?carrier=promo"),
        service.base_store).exception
    space = patches.enumerate_null_recovery(program, exc, "sig")
    fix = next(p for p in space.patches if p.payload == "0")
    other = next(p for p in space.patches if p.strategy == "S3-skip")
    for p in (fix, other):
        p.transition("valid")
        service.push_valid(p, patches.apply_patch(program, p))
    approved = service.approve(fix.id)
    assert approved.state == "approved"
    assert service.program_ref.get().version == program.version + 1
    assert other.state == "rejected"
    assert service.queue == []
    # production now serves the originally failing request
    result = execute(service.program_ref.get(),
                     RequestEnvelope(method="GET",
                                     path="/shipping?carrier=promo"),
                     ReadWriteHandle(service.base_store))
    assert result.ok and result.response.status == 200


def test_approve_and_reject_guard_states():
    service, _ = make_service()
    patch = noop_patch(service)
    with pytest.raises(UnknownPatch):
        service.approve("nope")
    with pytest.raises(UnknownPatch):
        service.reject("nope")
    service.reject(patch.id)
    assert patch.state == "rejected"
    with pytest.raises(WrongState):
        service.reject(patch.id)
    with pytest.raises(WrongState):
        service.approve(patch.id)


def test_reject_does_not_alter_other_counts():
    service, _ = make_service()
    keep = noop_patch(service)
    drop = human(service, "count_items",
                 render_method(
                     service.program_ref.get().methods["count_items"]) + "\n")
    r = RequestEnvelope(method="GET", path="/catalog")
    resp, pre = production(service, r)
    service.on_success_request(r, resp, pre)
    before = keep.regression_success_count
    service.reject(drop.id)
    assert keep.regression_success_count == before
    assert [row["id"] for row in service.ranked_report()] == [keep.id]


def test_queue_snapshot_per_request():
    # a patch pushed while a request is being processed joins the next one
    service, _ = make_service()
    first = noop_patch(service)
    r = RequestEnvelope(method="GET", path="/catalog")
    resp, pre = production(service, r)
    reports = service.on_success_request(r, resp, pre)
    assert len(reports) == 1
    late = human(service, "count_items", render_method(
        service.program_ref.get().methods["count_items"]) + "\n")
    resp, pre = production(service, r)
    reports = service.on_success_request(r, resp, pre)
    assert len(reports) == 2
    assert first.regression_success_count == 2
    assert late.regression_success_count == 1


def test_ranked_report_order_and_fields():
    service, _ = make_service()
    counts = {"a-sig": 5, "b-sig": 2}
    service.failure_count_of = lambda sig: counts.get(sig, 0)
    low = noop_patch(service)
    low.failure_signature = "b-sig"
    high = human(service, "count_items", render_method(
        service.program_ref.get().methods["count_items"]) + "\n")
    high.failure_signature = "a-sig"
    rows = service.ranked_report()
    assert [r["signature"] for r in rows] == ["a-sig", "b-sig"]
    assert {"id", "model", "strategy", "state", "signature",
            "failure_count", "regression_success_count",
            "diff"} <= set(rows[0])
