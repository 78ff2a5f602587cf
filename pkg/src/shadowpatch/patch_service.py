"""Patch service: consume failing requests, enumerate candidate patches
under both models, validate each candidate by sandboxed replay of the
original failing request, and hand valid patches to the regression sink.

Validity is exactly "the replay passes the request oracle"; every candidate
ends up valid or invalid, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import oracles, patches
from .envelopes import RequestEnvelope
from .events import EventLog, failure_signature
from .hlang.interp import ExecLimits, match_route
from .runtime import ProgramRef, sandbox_execute
from .store import Store


class UnknownSignature(LookupError):
    pass


class ReExecutionMismatch(RuntimeError):
    """Sandboxed replay did not reproduce the production failure."""


@dataclass
class FailureRecord:
    signature: str
    first_request: RequestEnvelope
    pre_state: dict = field(default_factory=dict)
    failure_count: int = 0
    explored: bool = False
    reproducible: bool = True
    spaces: dict = field(default_factory=dict)  # model -> SearchSpace
    patches: list = field(default_factory=list)  # all candidates, both models


class PatchService:
    def __init__(self, program_ref: ProgramRef, base_store: Store,
                 log: EventLog = None, limits: ExecLimits = None,
                 sink=None, stall_ms: float = 0.0):
        self.program_ref = program_ref
        self.base_store = base_store
        self.log = log if log is not None else EventLog()
        self.limits = limits
        self.sink = sink  # callable(patch, patched_program)
        self.stall_ms = stall_ms  # artificial search stall (asynchrony test)
        self.records = {}  # signature -> FailureRecord
        self._order = []  # signatures in first-seen order

    # -- main entry (Algorithm-1 failing branch) --

    def on_failing_request(self, r: RequestEnvelope,
                           pre_state: dict = None) -> list:
        """Process one failing request; returns the valid patches (empty
        unless this is the first request of its signature)."""
        if self.stall_ms:
            import time
            time.sleep(self.stall_ms / 1000.0)
        program = self.program_ref.get()
        replay = sandbox_execute(program, r, self.base_store, pre_state,
                                 self.limits)
        if replay.ok:
            self.log.append("unreproducible", request_id=r.request_id)
            raise ReExecutionMismatch(r.request_id)
        exc = replay.exception
        route, _ = match_route(program, r.method, r.path)
        sig = failure_signature(exc.kind, exc.location, route.pattern)
        rec = self.records.get(sig)
        if rec is None:
            rec = FailureRecord(signature=sig, first_request=r,
                                pre_state=dict(pre_state or {}))
            self.records[sig] = rec
            self._order.append(sig)
        rec.failure_count += 1
        self.log.append("failure", request_id=r.request_id, signature=sig,
                        count=rec.failure_count)
        if rec.explored:
            return []
        rec.explored = True
        return self._explore(rec, program, replay, pre_state)

    def _explore(self, rec, program, replay, pre_state) -> list:
        exc = replay.exception
        spaces = []
        if exc.kind == "null-deref":
            spaces.append(patches.enumerate_null_recovery(
                program, exc, rec.signature))
        else:
            spaces.append(patches.SearchSpace(
                model=patches.NULL_RECOVERY, failure_signature=rec.signature))
        spaces.append(patches.enumerate_exception_stopper(
            program, exc, rec.signature))
        valid = []
        for space in spaces:
            rec.spaces[space.model] = space
            for patch in space.patches:
                rec.patches.append(patch)
                patched = patches.apply_patch(program, patch)
                result = sandbox_execute(patched, rec.first_request,
                                         self.base_store, pre_state,
                                         self.limits)
                passed = (oracles.request_oracle_exception(result).passed
                          and oracles.request_oracle_status(
                              result.response).passed)
                patch.transition("valid" if passed else "invalid")
                self.log.append("patch-classified", patch=patch.id,
                                signature=rec.signature, model=patch.model,
                                strategy=patch.strategy, state=patch.state)
                if passed:
                    valid.append(patch)
                    if self.sink is not None:
                        self.sink(patch, patched)
        return valid

    # -- reporting (per-signature valid/invalid table) --

    def classification_report(self, signature: str) -> dict:
        rec = self.records.get(signature)
        if rec is None or not rec.explored:
            raise UnknownSignature(signature)
        out = {}
        for model in (patches.NULL_RECOVERY, patches.EXCEPTION_STOPPER):
            space = rec.spaces.get(model)
            ps = space.patches if space else []
            out[model] = {
                "valid": sum(1 for p in ps if p.state != "invalid"),
                "invalid": sum(1 for p in ps if p.state == "invalid"),
            }
        return out

    def signatures(self) -> list:
        return list(self._order)

    def failure_count_of(self, signature: str) -> int:
        rec = self.records.get(signature)
        return rec.failure_count if rec else 0

    def failure_summaries(self) -> list:
        """Dashboard feed: one row per signature, failure-count descending."""
        rows = []
        for sig in self._order:
            rec = self.records[sig]
            counts = {}
            for model, space in rec.spaces.items():
                counts[model] = {
                    "valid": sum(1 for p in space.patches
                                 if p.state != "invalid"),
                    "invalid": sum(1 for p in space.patches
                                   if p.state == "invalid"),
                }
            rows.append({
                "signature": sig,
                "count": rec.failure_count,
                "explored": rec.explored,
                "patch_counts": counts,
            })
        rows.sort(key=lambda r: (-r["count"], r["signature"]))
        return rows
