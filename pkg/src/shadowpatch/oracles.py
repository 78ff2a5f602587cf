"""Request oracles (pass/fail per execution) and execution-comparison
oracles (divergence between reference and patched executions).

All oracles are pure functions; comparison magnitude for coverage oracles is
the normalized symmetric difference |A ^ B| / |A u B|.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .envelopes import ResponseEnvelope
from .hlang.interp import CoverageTrace, ExecutionResult

ORACLE_NAMES = ("status", "content", "method-coverage", "block-coverage")


@dataclass
class RequestOracleVerdict:
    passed: bool
    reason: str


@dataclass
class DivergenceReport:
    oracle: str
    request_id: str
    diverged: bool
    magnitude: float  # in [0,1]; 0/1 for status and content

    def as_dict(self):
        return {
            "oracle": self.oracle,
            "request_id": self.request_id,
            "diverged": self.diverged,
            "magnitude": self.magnitude,
        }

    def as_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def request_oracle_status(resp: ResponseEnvelope) -> RequestOracleVerdict:
    """Failing iff the HTTP status is 5xx; 4xx is a client error, not a
    server failure."""
    if resp.is_server_error:
        return RequestOracleVerdict(False, f"server error status {resp.status}")
    return RequestOracleVerdict(True, f"status {resp.status}")


def request_oracle_exception(result: ExecutionResult) -> RequestOracleVerdict:
    if result.ok:
        return RequestOracleVerdict(True, "no unhandled exception")
    return RequestOracleVerdict(
        False, f"unhandled exception: {result.exception.kind}")


class ScrubRules:
    """Ordered text-rewrite rules removing transient response content.

    File format: one rule per line, `pattern<TAB>replacement` (Python regex).
    The bundled default set is idempotent; ScrubRules.check_idempotent can
    verify a custom set over a corpus.
    """

    def __init__(self, rules=None):
        self.rules = [(re.compile(p), r) for p, r in (rules or [])]

    @classmethod
    def default(cls) -> "ScrubRules":
        return cls([
            (r"\d{4}-\d{2}-\d{2}(T\d{2}:\d{2}:\d{2})?", "<T>"),
            (r"sid-[0-9a-zA-Z-]+", "<S>"),
            (r"date=[^&\s]+", "date=<T>"),
        ])

    @classmethod
    def load(cls, path) -> "ScrubRules":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                pattern, replacement = line.split("\t", 1)
                rules.append((pattern, replacement))
        return cls(rules)

    def apply(self, body: bytes) -> bytes:
        text = body.decode("utf-8")
        for pattern, replacement in self.rules:
            text = pattern.sub(replacement, text)
        return text.encode()

    def check_idempotent(self, corpus) -> bool:
        return all(self.apply(self.apply(b)) == self.apply(b) for b in corpus)


def scrub(body: bytes, rules: ScrubRules) -> bytes:
    return rules.apply(body)


def compare_status(ref: ResponseEnvelope, patched: ResponseEnvelope,
                   request_id: str = "") -> DivergenceReport:
    diverged = ref.status != patched.status
    return DivergenceReport("status", request_id, diverged, 1.0 if diverged else 0.0)


def compare_content(ref: ResponseEnvelope, patched: ResponseEnvelope,
                    rules: ScrubRules, request_id: str = "") -> DivergenceReport:
    diverged = rules.apply(ref.body) != rules.apply(patched.body)
    return DivergenceReport("content", request_id, diverged, 1.0 if diverged else 0.0)


def coverage_magnitude(a: set, b: set) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a ^ b) / len(union)


def compare_coverage(ref: CoverageTrace, patched: CoverageTrace,
                     granularity: str, request_id: str = "") -> DivergenceReport:
    if granularity == "method":
        mag = coverage_magnitude(ref.methods, patched.methods)
        name = "method-coverage"
    elif granularity == "block":
        mag = coverage_magnitude(ref.blocks, patched.blocks)
        name = "block-coverage"
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    return DivergenceReport(name, request_id, mag > 0, mag)
