"""Tree-walking interpreter with coverage and exception capture.

A single execution is single-threaded and deterministic given the program,
the request, the store contents and the limits. All mutability lives in the
store handle and in the returned ExecutionResult; the Program itself is
never modified.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .. import values
from ..envelopes import RequestEnvelope, ResponseEnvelope
from . import ast
from .errors import StepLimitExceeded

EXCEPTION_KINDS = (
    "null-deref", "div-by-zero", "index-out-of-bounds",
    "type-error", "explicit-throw", "timeout",
)


class NoRouteMatch(LookupError):
    pass


@dataclass
class ExecLimits:
    max_steps: int = 100_000


@dataclass
class CoverageTrace:
    methods: set = field(default_factory=set)  # method names
    blocks: set = field(default_factory=set)  # (method, block)

    def as_dict(self):
        return {
            "methods": sorted(self.methods),
            "blocks": sorted(f"{m}:b{b}" for m, b in self.blocks),
        }


@dataclass
class ScopeVar:
    name: str
    value: object
    dtype: str


@dataclass
class ExceptionInfo:
    kind: str
    location: tuple  # (method, block, idx)
    stack: list  # outermost-first list of (method, (block, idx))
    scope_snapshot: list  # per frame (same order as stack): list[ScopeVar]
    payload: object = None
    null_base_nid: Optional[int] = None  # null-deref: nid of the null base expr
    null_base_type: str = "any"  # static type of that expression

    def as_dict(self):
        return {
            "kind": self.kind,
            "location": list(self.location),
            "stack": [[m, list(p)] for m, p in self.stack],
            "scope": [
                [[v.name, values.to_json(v.value), v.dtype] for v in frame]
                for frame in self.scope_snapshot
            ],
            "payload": values.to_json(self.payload),
        }


@dataclass
class ExecutionResult:
    outcome: str  # "success" | "exception"
    response: Optional[ResponseEnvelope] = None
    exception: Optional[ExceptionInfo] = None
    coverage: CoverageTrace = field(default_factory=CoverageTrace)
    store_writes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.outcome == "success"

    def serialize(self) -> str:
        doc = {
            "outcome": self.outcome,
            "coverage": self.coverage.as_dict(),
            "store_writes": [
                [k, values.to_json(v)] for k, v in self.store_writes
            ],
        }
        if self.response is not None:
            doc["response"] = {
                "status": self.response.status,
                "body": self.response.body.decode("utf-8", "replace"),
            }
        if self.exception is not None:
            doc["exception"] = self.exception.as_dict()
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


class _Signal(Exception):
    """Internal carrier for in-language runtime exceptions."""

    def __init__(self, info: ExceptionInfo):
        self.info = info


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


class _Frame:
    __slots__ = ("method", "env", "types", "pos")

    def __init__(self, method: ast.Method):
        self.method = method
        self.env = {}
        self.types = {}
        self.pos = (0, 0)


def match_route(program: ast.Program, method: str, path: str):
    """Return (route, params) for the first matching route, else raise."""
    path_only = path.split("?", 1)[0]
    segs = [s for s in path_only.split("/") if s]
    for route in program.routes:
        if route.verb != method.upper():
            continue
        pat = route.segments()
        if len(pat) != len(segs):
            continue
        params = {}
        for p, s in zip(pat, segs):
            if p.startswith(":"):
                params[p[1:]] = s
            elif p != s:
                break
        else:
            return route, params
    raise NoRouteMatch(f"{method} {path_only}")


def _parse_query(path: str) -> dict:
    if "?" not in path:
        return {}
    query = path.split("?", 1)[1]
    out = {}
    for pair in query.split("&"):
        if not pair:
            continue
        if "=" in pair:
            k, v = pair.split("=", 1)
        else:
            k, v = pair, ""
        out[k] = v
    return out


def build_request_record(request: RequestEnvelope, params: dict) -> dict:
    return {
        "method": request.method.upper(),
        "path": request.path.split("?", 1)[0],
        "params": dict(params),
        "query": _parse_query(request.path),
        "body": request.body.decode("utf-8", "replace"),
        "session": request.session_id,
    }


def execute(program: ast.Program, request: RequestEnvelope, store_handle,
            limits: ExecLimits = None) -> ExecutionResult:
    """Run one request against the program; never raises for in-language
    failures (they become Exception outcomes)."""
    limits = limits or ExecLimits()
    route, params = match_route(program, request.method, request.path)
    interp = Interp(program, store_handle, limits)
    req_record = build_request_record(request, params)
    return interp.run(route.method, req_record, request)


class Interp:
    def __init__(self, program: ast.Program, store_handle, limits: ExecLimits):
        self.program = program
        self.store = store_handle
        self.limits = limits
        self.steps = 0
        self.frames = []
        self.coverage = CoverageTrace()
        self.response = None

    # -- top level --

    def run(self, entry: str, req_record: dict,
            request: RequestEnvelope) -> ExecutionResult:
        method = self.program.methods[entry]
        args = [req_record] if method.params else []
        try:
            self.call_method(entry, args)
        except _Signal as sig:
            return ExecutionResult(
                outcome="exception",
                exception=sig.info,
                coverage=self.coverage,
                store_writes=list(self.store.write_log),
            )
        except StepLimitExceeded as exc:
            return ExecutionResult(
                outcome="exception",
                exception=exc.args[0],
                coverage=self.coverage,
                store_writes=list(self.store.write_log),
            )
        if self.response is None:
            resp = ResponseEnvelope(status=204, body=b"", produced_at=1.0)
        else:
            status, body = self.response
            resp = ResponseEnvelope(
                status=status, body=body.encode(), produced_at=1.0)
        return ExecutionResult(
            outcome="success",
            response=resp,
            coverage=self.coverage,
            store_writes=list(self.store.write_log),
        )

    # -- failure plumbing --

    def _snapshot(self) -> ExceptionInfo:
        frame = self.frames[-1]
        location = (frame.method.name, frame.pos[0], frame.pos[1])
        stack = [(f.method.name, f.pos) for f in self.frames]
        scope = [
            [ScopeVar(n, values.deep_copy(v), f.types.get(n, "any"))
             for n, v in f.env.items()]
            for f in self.frames
        ]
        return ExceptionInfo(
            kind="", location=location, stack=stack, scope_snapshot=scope)

    def _raise(self, kind: str, payload=None, null_nid=None, null_type="any"):
        info = self._snapshot()
        info.kind = kind
        info.payload = payload
        info.null_base_nid = null_nid
        info.null_base_type = null_type
        raise _Signal(info)

    def _step(self):
        self.steps += 1
        if self.steps > self.limits.max_steps:
            info = self._snapshot()
            info.kind = "timeout"
            raise StepLimitExceeded(info)

    # -- calls --

    def call_method(self, name: str, args: list):
        method = self.program.methods[name]
        if len(args) != len(method.params):
            if self.frames:
                self._raise("type-error",
                            f"wrong argument count for {name}()")
            raise _Signal(ExceptionInfo(
                kind="type-error", location=(name, 0, 0), stack=[],
                scope_snapshot=[], payload="bad entry arity"))
        frame = _Frame(method)
        for (pname, ptype), value in zip(method.params, args):
            frame.env[pname] = value
            frame.types[pname] = ptype
        self.frames.append(frame)
        try:
            if not self._value_ok(method, args):
                self._raise("type-error", f"argument type mismatch in {name}()")
            self.exec_stmts(method.body)
            result = None
        except _ReturnSignal as ret:
            result = ret.value
        finally:
            self.frames.pop()
        return result

    @staticmethod
    def _value_ok(method: ast.Method, args) -> bool:
        return all(
            values.value_matches(ptype, arg)
            for (_, ptype), arg in zip(method.params, args)
        )

    # -- statements --

    def exec_stmts(self, stmts):
        for st in stmts:
            self.exec_stmt(st)

    def exec_stmt(self, st: ast.Stmt):
        self._step()
        frame = self.frames[-1]
        frame.pos = (st.block, st.idx)
        self.coverage.methods.add(frame.method.name)
        self.coverage.blocks.add((frame.method.name, st.block))

        if isinstance(st, ast.Let):
            value = self.eval(st.expr)
            if not values.value_matches(st.dtype, value):
                self._raise("type-error",
                            f"let {st.name}: {st.dtype} got {values.type_name(value)}")
            frame.env[st.name] = value
            frame.types[st.name] = st.dtype
        elif isinstance(st, ast.Assign):
            self.assign(st.target, self.eval(st.expr))
        elif isinstance(st, ast.If):
            cond = self.eval(st.cond)
            if not isinstance(cond, bool):
                self._raise("type-error", "if condition must be bool")
            if cond:
                self.exec_stmts(st.then)
            else:
                self.exec_stmts(st.els)
        elif isinstance(st, ast.While):
            while True:
                self._step()
                cond = self.eval(st.cond)
                if not isinstance(cond, bool):
                    self._raise("type-error", "while condition must be bool")
                if not cond:
                    break
                self.exec_stmts(st.body)
        elif isinstance(st, ast.Return):
            value = self.eval(st.expr) if st.expr is not None else None
            raise _ReturnSignal(value)
        elif isinstance(st, ast.Throw):
            payload = self.eval(st.expr)
            self._raise("explicit-throw", payload)
        elif isinstance(st, ast.Respond):
            status = self.eval(st.status)
            body = self.eval(st.body)
            if self.response is not None:
                self._raise("type-error", "responded twice")
            if not isinstance(status, int) or isinstance(status, bool):
                self._raise("type-error", "respond status must be int")
            if not isinstance(body, str):
                self._raise("type-error", "respond body must be str")
            self.response = (status, body)
        elif isinstance(st, ast.Skip):
            pass
        elif isinstance(st, ast.TryCatch):
            try:
                self.exec_stmts(st.body)
            except _Signal:
                # Unwinding already popped any callee frames; resume here.
                frame.pos = (st.block, st.idx)
                self.exec_stmts(st.handler)
        elif isinstance(st, ast.ExprStmt):
            self.eval(st.expr)
        elif isinstance(st, ast.StorePut):
            key = self.eval(st.key)
            value = self.eval(st.value)
            if not isinstance(key, str):
                self._raise("type-error", "store key must be str")
            self.store.put(key, value)
        else:  # pragma: no cover
            raise TypeError(f"unknown statement {st!r}")

    def assign(self, target: ast.Expr, value):
        frame = self.frames[-1]
        if isinstance(target, ast.Var):
            if target.name not in frame.env:
                self._raise("type-error",
                            f"assignment to undeclared variable {target.name}")
            if not values.value_matches(frame.types.get(target.name, "any"), value):
                self._raise("type-error",
                            f"type mismatch assigning {target.name}")
            frame.env[target.name] = value
        elif isinstance(target, ast.FieldAccess):
            base = self.eval(target.base)
            if base is None:
                self._raise("null-deref", f".{target.name} on null",
                            null_nid=target.base.nid,
                            null_type=self.static_type(target.base))
            if not isinstance(base, dict):
                self._raise("type-error", "field assignment on non-record")
            base[target.name] = value
        elif isinstance(target, ast.IndexAccess):
            base = self.eval(target.base)
            idx = self.eval(target.index)
            if base is None:
                self._raise("null-deref", "index assignment on null",
                            null_nid=target.base.nid,
                            null_type=self.static_type(target.base))
            if not isinstance(base, list) or not isinstance(idx, int) \
                    or isinstance(idx, bool):
                self._raise("type-error", "bad index assignment")
            if idx < 0 or idx >= len(base):
                self._raise("index-out-of-bounds", idx)
            base[idx] = value
        else:
            # Reachable only through synthesized edits; fail in-language.
            self._raise("type-error", "unassignable target")

    # -- expressions --

    def static_type(self, e: ast.Expr) -> str:
        """Best-effort declared type of an expression; `any` when unknown."""
        if isinstance(e, ast.Var):
            return self.frames[-1].types.get(e.name, "any")
        return "any"

    def eval(self, e: ast.Expr):
        if isinstance(e, ast.Lit):
            return e.value
        if isinstance(e, ast.Var):
            frame = self.frames[-1]
            if e.name not in frame.env:
                self._raise("type-error", f"undefined variable {e.name}")
            return frame.env[e.name]
        if isinstance(e, ast.RecordLit):
            return {name: self.eval(v) for name, v in e.fields}
        if isinstance(e, ast.ListLit):
            return [self.eval(v) for v in e.items]
        if isinstance(e, ast.FieldAccess):
            base = self.eval(e.base)
            if base is None:
                self._raise("null-deref", f".{e.name} on null",
                            null_nid=e.base.nid,
                            null_type=self.static_type(e.base))
            if not isinstance(base, dict):
                self._raise("type-error",
                            f"field access on {values.type_name(base)}")
            return base.get(e.name)  # missing field reads as null
        if isinstance(e, ast.IndexAccess):
            base = self.eval(e.base)
            idx = self.eval(e.index)
            if base is None:
                self._raise("null-deref", "index on null",
                            null_nid=e.base.nid,
                            null_type=self.static_type(e.base))
            if not isinstance(idx, int) or isinstance(idx, bool):
                self._raise("type-error", "index must be int")
            if isinstance(base, (list, str)):
                if idx < 0 or idx >= len(base):
                    self._raise("index-out-of-bounds", idx)
                return base[idx]
            self._raise("type-error",
                        f"indexing a {values.type_name(base)}")
        if isinstance(e, ast.Call):
            args = [self.eval(a) for a in e.args]
            if e.name in ("str", "len", "append"):
                return self.builtin(e, args)
            self._step()
            return self.call_method(e.name, args)
        if isinstance(e, ast.StoreGet):
            key = self.eval(e.key)
            if not isinstance(key, str):
                self._raise("type-error", "store key must be str")
            return self.store.get(key)
        if isinstance(e, ast.Unary):
            val = self.eval(e.operand)
            if e.op == "!":
                if not isinstance(val, bool):
                    self._raise("type-error", "! needs bool")
                return not val
            if not isinstance(val, int) or isinstance(val, bool):
                self._raise("type-error", "unary - needs int")
            return -val
        if isinstance(e, ast.Binary):
            return self.eval_binary(e)
        raise TypeError(f"unknown expression {e!r}")  # pragma: no cover

    def builtin(self, call: ast.Call, args: list):
        name = call.name
        if name == "str":
            if len(args) != 1:
                self._raise("type-error", "str() takes one argument")
            return values.to_text(args[0])
        if name == "len":
            if len(args) != 1:
                self._raise("type-error", "len() takes one argument")
            v = args[0]
            if v is None:
                self._raise("null-deref", "len(null)",
                            null_nid=call.args[0].nid)
            if not isinstance(v, (list, str, dict)):
                self._raise("type-error", "len() needs list, str or record")
            return len(v)
        # append(list, value) -> new list
        if len(args) != 2:
            self._raise("type-error", "append() takes two arguments")
        lst, item = args
        if lst is None:
            self._raise("null-deref", "append(null, _)",
                        null_nid=call.args[0].nid)
        if not isinstance(lst, list):
            self._raise("type-error", "append() needs a list")
        return lst + [item]

    def eval_binary(self, e: ast.Binary):
        op = e.op
        if op in ("&&", "||"):
            left = self.eval(e.left)
            if not isinstance(left, bool):
                self._raise("type-error", f"{op} needs bools")
            if op == "&&" and not left:
                return False
            if op == "||" and left:
                return True
            right = self.eval(e.right)
            if not isinstance(right, bool):
                self._raise("type-error", f"{op} needs bools")
            return right
        left = self.eval(e.left)
        right = self.eval(e.right)
        if op in ("==", "!="):
            eq = _deep_eq(left, right)
            return eq if op == "==" else not eq
        if op in ("<", "<=", ">", ">="):
            if not _is_int(left) or not _is_int(right):
                self._raise("type-error", f"{op} needs ints")
            return {"<": left < right, "<=": left <= right,
                    ">": left > right, ">=": left >= right}[op]
        if op == "+":
            if _is_int(left) and _is_int(right):
                return left + right
            if isinstance(left, str) and isinstance(right, str):
                return left + right
            self._raise("type-error", "+ needs two ints or two strs")
        if not _is_int(left) or not _is_int(right):
            self._raise("type-error", f"{op} needs ints")
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if right == 0:
            self._raise("div-by-zero", op)
        if op == "/":
            return left // right
        return left % right


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _deep_eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if values.type_name(a) != values.type_name(b):
        return False
    return a == b
