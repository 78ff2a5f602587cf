"""Handler language: parser, interpreter, canonical printer."""

from .ast import Program, Method, assign_blocks, find_stmt, iter_stmts
from .errors import (
    DuplicateMethod,
    HplError,
    HplSyntaxError,
    SandboxViolation,
    StepLimitExceeded,
    UnknownCallTarget,
)
from .interp import (
    EXCEPTION_KINDS,
    CoverageTrace,
    ExecLimits,
    ExceptionInfo,
    ExecutionResult,
    NoRouteMatch,
    ScopeVar,
    execute,
    match_route,
)
from .parser import parse
from .printer import render_program

__all__ = [
    "Program", "Method", "assign_blocks", "find_stmt", "iter_stmts",
    "DuplicateMethod", "HplError", "HplSyntaxError", "SandboxViolation",
    "StepLimitExceeded", "UnknownCallTarget",
    "EXCEPTION_KINDS", "CoverageTrace", "ExecLimits", "ExceptionInfo",
    "ExecutionResult", "NoRouteMatch", "ScopeVar", "execute", "match_route",
    "parse", "render_program",
]
