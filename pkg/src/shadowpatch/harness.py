"""In-process composition of the full topology and the four experiment
protocols (fault classification, oracle comparison, proxy overhead,
end-to-end scenarios).

The deterministic pipeline drives the shadower queues synchronously after
each request, so seeded runs produce byte-identical reports.
"""

from __future__ import annotations

import copy
import json
import time

from . import appsim, patches
from .control_api import ControlApi
from .envelopes import RequestEnvelope
from .events import EventLog
from .hlang import ast
from .hlang.interp import ExecLimits
from .hlang.printer import render_method
from .httpserve import execute_production
from .patch_service import PatchService, ReExecutionMismatch
from .regression_service import RegressionService
from .runtime import ProgramRef, sandbox_execute
from .shadower import Shadower
from .store import ReadWriteHandle


class BadConfig(ValueError):
    pass


class Pipeline:
    """Production app + shadower + patch service + regression service,
    wired in-process."""

    def __init__(self, program=None, store=None, oracle: str = "content",
                 log: EventLog = None, limits: ExecLimits = None,
                 stall_ms: float = 0.0, profile: str = "shop"):
        if profile not in appsim.PROFILES:
            raise BadConfig(f"unknown app profile {profile!r}")
        self.log = log if log is not None else EventLog()
        self.limits = limits
        self.store = store if store is not None else appsim.initial_store()
        self.program_ref = ProgramRef(
            program if program is not None else appsim.load_shop_program())
        self.patch_service = PatchService(
            self.program_ref, self.store, self.log, limits,
            stall_ms=stall_ms)
        self.regression = RegressionService(
            self.program_ref, self.store, oracle=oracle, log=self.log,
            limits=limits,
            failure_count_of=self.patch_service.failure_count_of)
        self.patch_service.sink = self.regression.push_valid
        self.shadower = Shadower(self._production, self._patch_sink,
                                 self._regression_sink, log=self.log)
        self.api = ControlApi(self.patch_service, self.regression, self.log)
        self.served = []  # every request handled, in order

    # -- component glue --

    def _production(self, r: RequestEnvelope):
        return execute_production(self.program_ref, self.store, r,
                                  self.limits)

    def _patch_sink(self, req, answer):
        try:
            self.patch_service.on_failing_request(req, answer.pre_state)
        except ReExecutionMismatch:
            pass  # recorded in the event log by the service

    def _regression_sink(self, req, answer):
        self.regression.on_success_request(req, answer.response,
                                           answer.pre_state, answer.result)

    # -- driving --

    def handle(self, r: RequestEnvelope, drain: bool = True):
        self.served.append(r)
        resp = self.shadower.handle_request(r)
        if drain:
            self.shadower.drain()
        return resp

    def run_workload(self, workload, drain: bool = True) -> list:
        return [self.handle(r, drain) for r in workload.all_requests()]

    def store_digest(self) -> str:
        return self.store.digest()


def production_only_digest(program, requests, limits: ExecLimits = None) -> str:
    """Digest of a fresh store after serving `requests` with no sandboxing
    at all. Any sandbox leak in a pipeline run shows up as a mismatch."""
    from .hlang.interp import execute

    store = appsim.initial_store()
    for r in requests:
        execute(program, r, ReadWriteHandle(store), limits)
    return store.digest()


# --- experiment 1: fault seeding and patch classification -------------------


def triggering_faults(program, workload, limit: int = None) -> list:
    """Eligible covered not-null checks whose removal makes >=1 workload
    request fail; deterministic source order."""
    if limit is not None and limit <= 0:
        return []
    covered = appsim.covered_blocks_for(program, workload)
    out = []
    for name, st, path in appsim.eligible_checks(program, covered):
        faulted, fault = appsim.apply_fault(program, name, st, path)
        if appsim.verify_fault_triggers(program, faulted, workload):
            out.append((faulted, fault))
            if limit is not None and len(out) >= limit:
                break
    return out

def rq1(faults: int = 10, seed: int = 42, profile: str = "shop",
        loops: int = 3) -> dict:
    """Seed faults one at a time, replay the workload, loop the first
    failing request, and tabulate valid/invalid patches per model."""
    base = appsim.load_shop_program()
    workload = appsim.generate_workload(profile, seed)
    picked = triggering_faults(base, workload, limit=faults)
    rows = []
    for faulted, fault in picked:
        pipe = Pipeline(program=faulted, profile=profile)
        pipe.run_workload(workload)
        signatures = pipe.patch_service.signatures()
        for sig in signatures:
            rec = pipe.patch_service.records[sig]
            for _ in range(loops):
                pipe.handle(rec.first_request)
        classification = {}
        spaces = {}
        for sig in signatures:
            classification[sig] = pipe.patch_service.classification_report(sig)
            rec = pipe.patch_service.records[sig]
            spaces[sig] = {m: len(s.patches) for m, s in rec.spaces.items()}
        rows.append({
            "fault": fault.id,
            "signatures": signatures,
            "classification": classification,
            "space_sizes": spaces,
            "store_digest_ok": pipe.store_digest()
            == production_only_digest(faulted, pipe.served),
        })
    passed = len(rows) >= min(faults, len(picked)) and all(
        any(c["null-recovery"]["valid"] >= 1
            for c in row["classification"].values())
        and all(c[m]["valid"] + c[m]["invalid"] == row["space_sizes"][s].get(m, 0)
                for s, c in row["classification"].items() for m in c)
        and row["store_digest_ok"]
        for row in rows)
    return {"experiment": "rq1", "seed": seed, "requested_faults": faults,
            "seeded_faults": len(rows), "faults": rows, "passed": passed}


# --- experiment 2: oracle comparison matrix ----------------------------------


def _stmt_pos(program, method: str, pred) -> tuple:
    for st in ast.iter_stmts(program.methods[method]):
        if pred(st):
            return (method, st.block, st.idx)
    raise LookupError(f"no matching statement in {method}")


def crafted_patch_suite(program) -> list:
    """>=12 candidate patches over the clean shop app with known verdicts:
    3 behavior-identical, 3 regressive (1 also status-visible), and 6
    structure-only edits that perturb block numbering."""
    suite = []

    def add(label, known, patch):
        suite.append({"label": label, "known": known, "patch": patch})

    def replacement(method, source):
        return patches.human_patch(method, source,
                                   origin_version=program.version)

    # correct: byte-identical method replacement
    add("noop-replace-find-product", "correct",
        replacement("find_product",
                    render_method(program.methods["find_product"])))
    # correct: local variable renamed, same structure and behavior
    renamed = copy.deepcopy(program.methods["find_customer"])
    for st in ast.iter_stmts(renamed):
        for root in ast.stmt_exprs(st):
            for e in ast.iter_exprs(root):
                if isinstance(e, ast.Var) and e.name == "i":
                    e.name = "k"
        if isinstance(st, ast.Let) and st.name == "i":
            st.name = "k"
        if isinstance(st, ast.Assign) and isinstance(st.target, ast.Var) \
                and st.target.name == "i":
            st.target.name = "k"
    add("rename-var-find-customer", "correct",
        replacement("find_customer", render_method(renamed)))
    # correct: dead trailing statement after the return
    padded = copy.deepcopy(program.methods["count_items"])
    padded.body.append(ast.Skip())
    add("dead-skip-count-items", "correct",
        replacement("count_items", render_method(padded)))

    # regressive, content-visible only: catalog rows suppressed, still 200
    pos = _stmt_pos(program, "browse_catalog",
                    lambda st: isinstance(st, ast.Assign)
                    and isinstance(st.target, ast.Var)
                    and st.target.name == "out" and st.block > 0)
    add("skip-catalog-row", "regressive", _edit_patch(
        program, "skip-stmt", pos, {"kind": "skip", "pos": list(pos)}))
    # regressive, content-visible only: every quote off by one cent
    add("shipping-off-by-one", "regressive", replacement(
        "shipping_quote",
        'method shipping_quote(c: record, n: int): record {\n'
        '  let per = c.per_item;\n'
        '  if (per == null) {\n'
        '    per = { cents: 0 };\n'
        '  }\n'
        '  let total = c.base + per.cents * n + 1;\n'
        '  return { total: total, carrier: c.name };\n'
        '}\n'))
    # regressive, status- and content-visible: 404 turned into 500
    add("missing-product-500", "regressive", replacement(
        "view_product",
        'method view_product(req: record) {\n'
        '  let products = store.get("products");\n'
        '  let p = find_product(products, req.params.id);\n'
        '  if (p == null) {\n'
        '    respond(500, "lookup blew up");\n'
        '    return;\n'
        '  }\n'
        '  let d = p.details;\n'
        '  if (d == null) {\n'
        '    d = { blurb: "standard item" };\n'
        '  }\n'
        '  respond(200, "product " + p.id + " " + p.name + " price:" '
        '+ str(p.price) + " " + d.blurb);\n'
        '}\n'))

    # structure-only: catch-wraps never triggered on the clean app
    for method in ("browse_catalog", "add_to_cart", "compute_shipping",
                   "checkout", "add_customer"):
        add(f"catch-wrap-{method.replace('_', '-')}", None, _edit_patch(
            program, "catch-wrap", method,
            {"kind": "catch-wrap", "method": method, "value": None}))
    # structure-only: guard that never fires (per is never null here)
    pos = _stmt_pos(program, "shipping_quote",
                    lambda st: isinstance(st, ast.Let)
                    and st.name == "total")
    add("redundant-null-guard", None, _edit_patch(
        program, "guard-substitute", pos,
        {"kind": "guard-substitute", "pos": list(pos), "guard": "per",
         "expr": "per.cents", "replacement": "0"}))
    return suite


def _edit_patch(program, strategy, target, edit):
    patch = patches.CandidatePatch(
        id="", model="crafted", strategy=strategy, target=target,
        payload=json.dumps(edit, sort_keys=True), edit=edit,
        origin_version=program.version)
    patch.id = patches._patch_id(patch.model, strategy, target, patch.payload)
    patch.state = "valid"
    return patch


def rq2(seed: int = 42, profile: str = "shop") -> dict:
    """Divergence matrix: every crafted patch against every workload
    request, under all four comparison oracles."""
    program = appsim.load_shop_program()
    workload = appsim.generate_workload(profile, seed)
    suite = crafted_patch_suite(program)
    applied = [(entry, patches.apply_patch(program, entry["patch"]))
               for entry in suite]
    regression = RegressionService(ProgramRef(program),
                                   appsim.initial_store())
    store = appsim.initial_store()
    stats = {entry["label"]: {o: {"diverged": 0, "total_magnitude": 0.0}
                              for o in ("status", "content",
                                        "method-coverage", "block-coverage")}
             for entry in suite}
    n_requests = 0
    for r in workload.all_requests():
        handle = ReadWriteHandle(store)
        from .hlang.interp import execute
        ref = execute(program, r, handle)
        if not ref.ok:
            continue
        n_requests += 1
        for entry, patched in applied:
            result = sandbox_execute(patched, r, store,
                                     pre_state=handle.undo)
            for report in regression.compare_all_oracles(
                    r.request_id, ref, result):
                cell = stats[entry["label"]][report.oracle]
                cell["diverged"] += 1 if report.diverged else 0
                cell["total_magnitude"] += report.magnitude
    rows = []
    for entry in suite:
        per_oracle = {}
        for oracle, cell in stats[entry["label"]].items():
            per_oracle[oracle] = {
                "flagged": cell["diverged"] > 0,
                "diverged_requests": cell["diverged"],
                "mean_magnitude": round(
                    cell["total_magnitude"] / n_requests, 6),
            }
        rows.append({"label": entry["label"], "known": entry["known"],
                     "id": entry["patch"].id, "oracles": per_oracle})
    regressive = [r for r in rows if r["known"] == "regressive"]
    correct = [r for r in rows if r["known"] == "correct"]
    content_flags = {r["label"] for r in rows
                     if r["oracles"]["content"]["flagged"]}
    status_flags = {r["label"] for r in rows
                    if r["oracles"]["status"]["flagged"]}
    passed = (
        all(r["label"] in content_flags for r in regressive)
        and status_flags < content_flags
        and all(not o["flagged"] and o["mean_magnitude"] == 0.0
                for r in correct for o in r["oracles"].values())
    )
    return {"experiment": "rq2", "seed": seed, "requests": n_requests,
            "patches": rows, "passed": passed}


# --- experiment 3: proxy overhead --------------------------------------------


def readonly_requests(workload) -> list:
    """The stateless subset of a workload (no cart/order mutation), safe to
    repeat without skewing latencies between measurement phases."""
    out = []
    for r in workload.all_requests():
        if r.method == "GET" and not r.path.startswith("/checkout"):
            out.append(RequestEnvelope(method=r.method, path=r.path,
                                       session_id=r.session_id))
    return out


def rq3(requests: int = 10000, profile: str = "shop",
        seed: int = 42) -> dict:
    """Measure shadower overhead over sequential loopback HTTP requests."""
    from .httpserve import HttpClient, ProxyUpstream, serve_app, \
        serve_shadower
    from .shadower import measure_overhead

    program_ref = ProgramRef(appsim.load_shop_program())
    store = appsim.initial_store()
    app = serve_app(program_ref, store)
    app.start()
    shadower = Shadower(ProxyUpstream("127.0.0.1", app.port),
                        lambda req, ans: None, lambda req, ans: None)
    shadower.start_workers()
    proxy = serve_shadower(shadower)
    proxy.start()
    pool = readonly_requests(appsim.generate_workload(profile, seed))
    sequence = [pool[i % len(pool)] for i in range(requests)]
    direct = HttpClient("127.0.0.1", app.port)
    proxied = HttpClient("127.0.0.1", proxy.port)
    try:
        report = measure_overhead(direct.call, proxied.call, sequence)
    finally:
        direct.close()
        proxied.close()
        proxy.stop()
        shadower.stop_workers()
        app.stop()
    doc = report.as_dict()
    doc.update({
        "experiment": "rq3",
        # the original measurement this re-creates, for reference only
        "reference": {"mean_direct_ms": 104.0, "mean_proxied_ms": 114.0,
                      "overhead_pct": 10.44},
        "passed": report.overhead_pct <= 25.0,
    })
    return doc


def measure_stall(requests: int = 200, stall_ms: float = 500.0,
                  profile: str = "shop") -> dict:
    """Client latency of failing requests with the patch search stalled,
    against the unstalled baseline (shadow queues consumed by workers)."""
    def run(stall: float) -> float:
        program, _ = appsim.scripted_fault(appsim.load_shop_program(),
                                           "shipping")
        pipe = Pipeline(program=program, profile=profile, stall_ms=stall)
        pipe.shadower.start_workers()
        failing = RequestEnvelope(method="GET",
                                  path="/shipping?carrier=promo",
                                  session_id="sid-stall")
        try:
            t0 = time.perf_counter()
            for _ in range(requests):
                pipe.handle(failing, drain=False)
            return (time.perf_counter() - t0) * 1000.0 / requests
        finally:
            pipe.shadower.stop_workers()

    baseline = run(0.0)
    stalled = run(stall_ms)
    ratio = stalled / baseline if baseline else 0.0
    return {"experiment": "stall", "requests": requests,
            "stall_ms": stall_ms,
            "baseline_mean_ms": round(baseline, 4),
            "stalled_mean_ms": round(stalled, 4),
            "ratio": round(ratio, 4), "passed": ratio <= 2.0}


# --- experiment 4: end-to-end scenarios --------------------------------------

HUMAN_FIXES = {"shipping": "shipping_quote", "admin-email": "add_customer"}


def human_fix_patch(scenario: str, faulted_version: int = 0):
    """The handwritten fix: restore the method the fault was seeded into."""
    clean = appsim.load_shop_program()
    method = HUMAN_FIXES[scenario]
    return patches.human_patch(method, render_method(clean.methods[method]),
                               origin_version=faulted_version)


def workload_outputs(program, workload) -> list:
    """(status, body) per request over a fresh-store sequential run."""
    out = []
    store = appsim.initial_store()
    from .hlang.interp import execute
    for r in workload.all_requests():
        res = execute(program, r, ReadWriteHandle(store))
        if res.ok:
            out.append((res.response.status, res.response.body))
        else:
            out.append((500, b"<error:" + res.exception.kind.encode() + b">"))
    return out


def rq4(scenario: str = "shipping", seed: int = 42,
        profile: str = "shop") -> dict:
    """Full end-to-end run of a real-bug analog: seed the scripted fault,
    drive the workload through the pipeline, rank surviving patches, and
    check output-equality against the handwritten fix."""
    if scenario not in HUMAN_FIXES:
        raise BadConfig(f"unknown scenario {scenario!r}")
    clean = appsim.load_shop_program()
    faulted, fault = appsim.scripted_fault(clean, scenario)
    workload = appsim.generate_workload(profile, seed)
    pipe = Pipeline(program=faulted, profile=profile)
    pipe.run_workload(workload)
    ranked = pipe.regression.ranked_report()
    human = human_fix_patch(scenario, faulted.version)
    human_outputs = workload_outputs(patches.apply_patch(faulted, human),
                                     workload)
    output_equal = []
    for row in ranked:
        qp = pipe.regression._all[row["id"]]
        if workload_outputs(qp.program, workload) == human_outputs:
            output_equal.append(row["id"])
    surviving_equal = [row["id"] for row in ranked
                       if row["state"] == "surviving"
                       and row["id"] in output_equal]
    classification = {
        sig: pipe.patch_service.classification_report(sig)
        for sig in pipe.patch_service.signatures()}
    surviving = [row["id"] for row in ranked if row["state"] == "surviving"]
    digest_ok = pipe.store_digest() == production_only_digest(
        faulted, pipe.served)
    # The shipping scenario demands a patch indistinguishable from the
    # handwritten fix; for admin-email the handwritten fix is semantically
    # better than anything in the search space, so surviving (error page
    # suppressed, no regression) is the bar. See docs/formats.md.
    if scenario == "shipping":
        passed = bool(surviving_equal) and digest_ok
    else:
        passed = bool(surviving) and digest_ok
    return {
        "experiment": "rq4",
        "scenario": scenario,
        "seed": seed,
        "fault": fault.id,
        "classification": classification,
        "ranked": ranked,
        "surviving": surviving,
        "output_equal_to_human_fix": output_equal,
        "surviving_output_equal": surviving_equal,
        "store_digest_ok": digest_ok,
        "passed": passed,
    }


def rq4_report_text(doc: dict) -> str:
    """Deterministic serialized form of an rq4 report."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
