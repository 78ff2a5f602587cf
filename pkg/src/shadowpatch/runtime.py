"""Shared runtime plumbing: the hot-swappable program reference and
sandboxed execution over an overlay store."""

from __future__ import annotations

import threading

from .envelopes import RequestEnvelope
from .hlang import ast
from .hlang.interp import ExecLimits, ExecutionResult, execute
from .store import OverlayReadOnlyHandle, Store


class ProgramRef:
    """Atomic holder of the current production program.

    Readers always observe a fully published version; `swap` is the only
    mutator (used by patch approval).
    """

    def __init__(self, program: ast.Program):
        self._lock = threading.Lock()
        self._program = program

    def get(self) -> ast.Program:
        with self._lock:
            return self._program

    def swap(self, program: ast.Program) -> None:
        with self._lock:
            self._program = program


def sandbox_execute(program: ast.Program, request: RequestEnvelope,
                    base_store: Store, pre_state: dict = None,
                    limits: ExecLimits = None) -> ExecutionResult:
    """Execute a request with all writes confined to a throwaway overlay;
    the base store is never modified.

    `pre_state` (an undo map from the production execution's handle) seeds
    the overlay so the sandbox observes the store as it was when production
    received the request, even though production has since written.
    """
    handle = OverlayReadOnlyHandle(base_store)
    if pre_state:
        for k, v in pre_state.items():
            handle.overlay[k] = v
    return execute(program, request, handle, limits)
