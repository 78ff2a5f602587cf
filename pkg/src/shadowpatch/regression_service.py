"""Regression service: hold the queue of valid patches, replay every
duplicated successful request against each patched program in a sandbox,
remove diverging patches, count survivals, and rank the survivors."""

from __future__ import annotations

from dataclasses import dataclass

from . import oracles
from .envelopes import RequestEnvelope, ResponseEnvelope
from .events import EventLog
from .hlang.interp import ExecLimits, ExecutionResult
from .patches import CandidatePatch, apply_edit, apply_patch, render_diff
from .runtime import ProgramRef, sandbox_execute
from .store import Store


class UnknownPatch(LookupError):
    pass


class WrongState(RuntimeError):
    pass


@dataclass
class QueuedPatch:
    patch: CandidatePatch
    program: object  # the patched program, applied once at enqueue
    base: object  # the program the patch was applied to (for diffs)


class RegressionService:
    def __init__(self, program_ref: ProgramRef, base_store: Store,
                 rules: oracles.ScrubRules = None, oracle: str = "content",
                 log: EventLog = None, limits: ExecLimits = None,
                 failure_count_of=None):
        if oracle not in oracles.ORACLE_NAMES:
            raise ValueError(f"unknown oracle {oracle!r}")
        self.program_ref = program_ref
        self.base_store = base_store
        self.rules = rules or oracles.ScrubRules.default()
        self.oracle = oracle
        self.log = log if log is not None else EventLog()
        self.limits = limits
        self.failure_count_of = failure_count_of or (lambda sig: 0)
        self.queue = []  # list[QueuedPatch], FIFO
        self._all = {}  # patch id -> QueuedPatch (including removed ones)

    # -- intake --

    def push_valid(self, patch: CandidatePatch, patched_program) -> None:
        """Handoff from the patch service; `patched_program` is the result
        of applying the patch to the program it was enumerated against."""
        if patch.id in self._all:
            return
        qp = QueuedPatch(patch=patch, program=patched_program,
                         base=self.program_ref.get())
        self.queue.append(qp)
        self._all[patch.id] = qp
        self.log.append("patch-queued", patch=patch.id,
                        signature=patch.failure_signature)

    def validate_human_patch(self, patch: CandidatePatch) -> CandidatePatch:
        """A handwritten edit enters the queue directly in state valid and
        is regressed exactly like a generated patch."""
        program = self.program_ref.get()
        patch.origin_version = program.version
        patched = apply_patch(program, patch)  # raises TargetMissing
        patch.state = "valid"
        self.push_valid(patch, patched)
        return patch

    # -- Algorithm-2 loop body --

    def on_success_request(self, r: RequestEnvelope,
                           ref_output: ResponseEnvelope,
                           pre_state: dict = None,
                           ref_result: ExecutionResult = None) -> list:
        """Replay r against every queued patch (snapshot at entry); remove
        diverging patches, count the rest. Reports in queue order.

        `ref_result` (the production execution, when available) supplies the
        reference coverage trace; without it, coverage-oracle configurations
        recompute the reference in a sandbox.
        """
        if self.oracle.endswith("coverage") and ref_result is None:
            ref_result = sandbox_execute(self.program_ref.get(), r,
                                         self.base_store, pre_state,
                                         self.limits)
        reports = []
        for qp in list(self.queue):
            result = sandbox_execute(qp.program, r, self.base_store,
                                     pre_state, self.limits)
            report = self._compare(r.request_id, ref_output, result,
                                   ref_result)
            reports.append(report)
            self.log.append("regression", request_id=r.request_id,
                            patch=qp.patch.id, oracle=report.oracle,
                            diverged=report.diverged,
                            magnitude=report.magnitude)
            if report.diverged:
                self._remove(qp, "regressive")
            else:
                qp.patch.regression_success_count += 1
                if qp.patch.state == "valid":
                    qp.patch.transition("surviving")
                    self.log.append("patch-state", patch=qp.patch.id,
                                    state="surviving")
        return reports

    def _compare(self, request_id: str, ref_output: ResponseEnvelope,
                 result: ExecutionResult,
                 ref_result: ExecutionResult = None) -> oracles.DivergenceReport:
        # A patched execution that throws (or loops past the step limit)
        # cannot match a successful production output: force divergence.
        if not result.ok:
            return oracles.DivergenceReport(self.oracle, request_id,
                                            True, 1.0)
        if self.oracle == "status":
            return oracles.compare_status(ref_output, result.response,
                                          request_id)
        if self.oracle == "content":
            return oracles.compare_content(ref_output, result.response,
                                           self.rules, request_id)
        granularity = self.oracle.split("-")[0]
        return oracles.compare_coverage(ref_result.coverage, result.coverage,
                                        granularity, request_id)

    def compare_all_oracles(self, request_id: str,
                            ref_result: ExecutionResult,
                            patched_result: ExecutionResult) -> list:
        """All four divergence reports for one replay, given full reference
        and patched execution results (used by the divergence-matrix
        experiment)."""
        ref_resp = ref_result.response
        if patched_result.ok:
            pat_resp = patched_result.response
        else:
            pat_resp = ResponseEnvelope(status=500, body=b"<crash>")
        return [
            oracles.compare_status(ref_resp, pat_resp, request_id),
            oracles.compare_content(ref_resp, pat_resp, self.rules,
                                    request_id),
            oracles.compare_coverage(ref_result.coverage,
                                     patched_result.coverage, "method",
                                     request_id),
            oracles.compare_coverage(ref_result.coverage,
                                     patched_result.coverage, "block",
                                     request_id),
        ]

    def _remove(self, qp: QueuedPatch, new_state: str) -> None:
        if qp in self.queue:
            self.queue.remove(qp)
        if qp.patch.state in ("valid", "surviving"):
            qp.patch.transition(new_state)
        self.log.append("patch-state", patch=qp.patch.id, state=new_state)

    # -- operator actions --

    def _lookup(self, patch_id: str) -> QueuedPatch:
        qp = self._all.get(patch_id)
        if qp is None:
            raise UnknownPatch(patch_id)
        return qp

    def approve(self, patch_id: str):
        """Approve: hot-swap production to the patched program and drop the
        approved patch's siblings (their failure no longer exists)."""
        qp = self._lookup(patch_id)
        if qp.patch.state not in ("valid", "surviving"):
            raise WrongState(f"{patch_id} is {qp.patch.state}")
        current = self.program_ref.get()
        promoted = qp.program
        if current.version != qp.patch.origin_version:
            # Production moved since enumeration; reapply on top of it.
            promoted = apply_edit(current, qp.patch.edit)
        qp.patch.transition("approved")
        self.program_ref.swap(promoted)
        if qp in self.queue:
            self.queue.remove(qp)
        sig = qp.patch.failure_signature
        for other in list(self.queue):
            if other.patch.failure_signature == sig and sig:
                self._remove(other, "rejected")
        self.log.append("patch-state", patch=patch_id, state="approved")
        return qp.patch

    def reject(self, patch_id: str):
        qp = self._lookup(patch_id)
        if qp.patch.state not in ("valid", "surviving"):
            raise WrongState(f"{patch_id} is {qp.patch.state}")
        self._remove(qp, "rejected")
        return qp.patch

    # -- reporting --

    def ranked_report(self) -> list:
        """Surviving/valid/approved patches ordered by (signature failure
        count desc, regression-success-count desc, id)."""
        rows = []
        for qp in self._all.values():
            p = qp.patch
            if p.state in ("invalid", "regressive", "rejected"):
                continue
            rows.append({
                "id": p.id,
                "model": p.model,
                "strategy": p.strategy,
                "state": p.state,
                "signature": p.failure_signature,
                "failure_count": self.failure_count_of(p.failure_signature),
                "regression_success_count": p.regression_success_count,
                "diff": render_diff(qp.base, p) if qp.base.version
                == p.origin_version else "",
            })
        rows.sort(key=lambda r: (-r["failure_count"],
                                 -r["regression_success_count"], r["id"]))
        return rows
