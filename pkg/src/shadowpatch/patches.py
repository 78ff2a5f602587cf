"""Patch models: null-recovery (guarded substitution / early return) and
exception-stopper (method-level catch-wrap), plus patch application and
diff rendering.

Edits are serialized AST transforms addressed by stable statement
coordinates and expression source text, so a SearchSpace enumerated twice
from the same (program, failure) is identical, ids included.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
from dataclasses import dataclass, field

from . import values
from .hlang import ast
from .hlang.interp import ExceptionInfo
from .hlang.parser import Parser
from .hlang.printer import render_expr, render_program

NULL_RECOVERY = "null-recovery"
EXCEPTION_STOPPER = "exception-stopper"

STATES = ("candidate", "valid", "invalid", "regressive", "surviving",
          "approved", "rejected")
_TRANSITIONS = {
    "candidate": {"valid", "invalid"},
    "valid": {"regressive", "surviving", "approved", "rejected"},
    "surviving": {"approved", "rejected"},
}

# Manufactured defaults, as expression source text, per declared type.
DEFAULT_SOURCES = {
    "int": ["0"],
    "str": ['""'],
    "bool": ["false"],
    "record": ["{}"],
    "list": ["[]"],
    "any": ["0", '""', "false", "{}", "[]"],
}


class NotANullDeref(ValueError):
    pass


class StaleProgramVersion(RuntimeError):
    pass


class TargetMissing(LookupError):
    pass


class InvalidTransition(RuntimeError):
    pass


@dataclass
class CandidatePatch:
    id: str
    model: str
    strategy: str
    target: object  # (method, block, idx) tuple or method name
    payload: str
    edit: dict  # serialized AST transform
    origin_version: int
    failure_signature: str = ""
    state: str = "candidate"
    regression_success_count: int = 0

    def transition(self, new_state: str) -> None:
        if new_state not in _TRANSITIONS.get(self.state, set()):
            raise InvalidTransition(f"{self.state} -> {new_state}")
        self.state = new_state

    def as_dict(self, diff: str = None):
        doc = {
            "id": self.id,
            "model": self.model,
            "strategy": self.strategy,
            "target": list(self.target) if isinstance(self.target, tuple)
            else self.target,
            "payload": self.payload,
            "edit": self.edit,
            "state": self.state,
            "regression_success_count": self.regression_success_count,
            "failure_signature": self.failure_signature,
        }
        if diff is not None:
            doc["diff"] = diff
        return doc


@dataclass
class SearchSpace:
    model: str
    failure_signature: str
    patches: list = field(default_factory=list)

    def serialize(self, program=None) -> str:
        lines = []
        for p in self.patches:
            diff = render_diff(program, p) if program is not None else None
            lines.append(json.dumps(p.as_dict(diff), sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def _patch_id(model, strategy, target, payload) -> str:
    blob = json.dumps([model, strategy, list(target) if isinstance(target, tuple)
                       else target, payload], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _mk_patch(model, strategy, target, payload, edit, version,
              signature="") -> CandidatePatch:
    return CandidatePatch(
        id=_patch_id(model, strategy, target, payload),
        model=model,
        strategy=strategy,
        target=target,
        payload=payload,
        edit=edit,
        origin_version=version,
        failure_signature=signature,
    )


def parse_expr_text(text: str) -> ast.Expr:
    parser = Parser(text)
    expr = parser.parse_expr()
    if parser.peek().kind != "eof":
        raise ValueError(f"trailing input in expression {text!r}")
    return expr


# --- expression traversal/substitution --------------------------------------


def _ordered_exprs(root: ast.Expr):
    """Pre-order, left-to-right expression traversal."""
    yield root
    if isinstance(root, ast.RecordLit):
        for _, v in root.fields:
            yield from _ordered_exprs(v)
    elif isinstance(root, ast.ListLit):
        for v in root.items:
            yield from _ordered_exprs(v)
    elif isinstance(root, ast.FieldAccess):
        yield from _ordered_exprs(root.base)
    elif isinstance(root, ast.IndexAccess):
        yield from _ordered_exprs(root.base)
        yield from _ordered_exprs(root.index)
    elif isinstance(root, ast.Call):
        for a in root.args:
            yield from _ordered_exprs(a)
    elif isinstance(root, ast.StoreGet):
        yield from _ordered_exprs(root.key)
    elif isinstance(root, ast.Unary):
        yield from _ordered_exprs(root.operand)
    elif isinstance(root, ast.Binary):
        yield from _ordered_exprs(root.left)
        yield from _ordered_exprs(root.right)


def _subst_expr(e: ast.Expr, match: str, repl: ast.Expr) -> ast.Expr:
    """Replace every subexpression rendering as `match` (returns new tree)."""
    if render_expr(e) == match:
        return copy.deepcopy(repl)
    e = copy.copy(e)
    if isinstance(e, ast.RecordLit):
        e.fields = [(n, _subst_expr(v, match, repl)) for n, v in e.fields]
    elif isinstance(e, ast.ListLit):
        e.items = [_subst_expr(v, match, repl) for v in e.items]
    elif isinstance(e, ast.FieldAccess):
        e.base = _subst_expr(e.base, match, repl)
    elif isinstance(e, ast.IndexAccess):
        e.base = _subst_expr(e.base, match, repl)
        e.index = _subst_expr(e.index, match, repl)
    elif isinstance(e, ast.Call):
        e.args = [_subst_expr(a, match, repl) for a in e.args]
    elif isinstance(e, ast.StoreGet):
        e.key = _subst_expr(e.key, match, repl)
    elif isinstance(e, ast.Unary):
        e.operand = _subst_expr(e.operand, match, repl)
    elif isinstance(e, ast.Binary):
        e.left = _subst_expr(e.left, match, repl)
        e.right = _subst_expr(e.right, match, repl)
    return e


def _subst_stmt(st: ast.Stmt, match: str, repl: ast.Expr) -> ast.Stmt:
    st = copy.deepcopy(st)
    _subst_stmt_in_place(st, match, repl)
    return st


def _subst_stmt_in_place(st: ast.Stmt, match: str, repl: ast.Expr) -> None:
    if isinstance(st, ast.Let):
        st.expr = _subst_expr(st.expr, match, repl)
    elif isinstance(st, ast.Assign):
        st.target = _subst_expr(st.target, match, repl)
        st.expr = _subst_expr(st.expr, match, repl)
    elif isinstance(st, (ast.If, ast.While)):
        st.cond = _subst_expr(st.cond, match, repl)
        for sub in ast.sub_stmt_lists(st):
            for child in sub:
                _subst_stmt_in_place(child, match, repl)
    elif isinstance(st, ast.Return):
        if st.expr is not None:
            st.expr = _subst_expr(st.expr, match, repl)
    elif isinstance(st, ast.Throw):
        st.expr = _subst_expr(st.expr, match, repl)
    elif isinstance(st, ast.Respond):
        st.status = _subst_expr(st.status, match, repl)
        st.body = _subst_expr(st.body, match, repl)
    elif isinstance(st, ast.ExprStmt):
        st.expr = _subst_expr(st.expr, match, repl)
    elif isinstance(st, ast.StorePut):
        st.key = _subst_expr(st.key, match, repl)
        st.value = _subst_expr(st.value, match, repl)


def _null_guard(expr_text: str) -> ast.Expr:
    return ast.Binary(op="==", left=parse_expr_text(expr_text),
                      right=ast.Lit(value=None))


# --- edit application --------------------------------------------------------


def _locate(program: ast.Program, pos):
    st = ast.find_stmt(program, tuple(pos))
    if st is None:
        raise TargetMissing(f"no statement at {pos}")
    return st


def _replace_stmt(method: ast.Method, old: ast.Stmt, new_stmts: list) -> None:
    def walk(stmts) -> bool:
        for i, st in enumerate(stmts):
            if st is old:
                stmts[i:i + 1] = new_stmts
                return True
            for sub in ast.sub_stmt_lists(st):
                if walk(sub):
                    return True
        return False

    if not walk(method.body):  # pragma: no cover
        raise TargetMissing("statement vanished during edit")


def apply_edit(program: ast.Program, edit: dict) -> ast.Program:
    """Apply one serialized edit, returning a new program (version + 1)."""
    out = copy.deepcopy(program)
    kind = edit["kind"]
    if kind == "guard-substitute":
        pos = tuple(edit["pos"])
        st = _locate(out, pos)
        expr_text = edit["expr"]
        if not any(render_expr(e) == expr_text
                   for root in ast.stmt_exprs(st)
                   for e in _ordered_exprs(root)):
            raise TargetMissing(f"expression {expr_text!r} not at {pos}")
        repl = parse_expr_text(edit["replacement"])
        patched = _subst_stmt(st, expr_text, repl)
        guarded = ast.If(cond=_null_guard(edit["guard"]), then=[patched],
                         els=[copy.deepcopy(st)])
        method = out.methods[pos[0]]
        _replace_stmt(method, st, [guarded])
        ast.assign_blocks(method)
    elif kind == "guard-return":
        pos = tuple(edit["pos"])
        st = _locate(out, pos)
        ret_expr = (parse_expr_text(edit["value"])
                    if edit.get("value") is not None else None)
        guard = ast.If(cond=_null_guard(edit["guard"]),
                       then=[ast.Return(expr=ret_expr)], els=[])
        method = out.methods[pos[0]]
        _replace_stmt(method, st, [guard, copy.deepcopy(st)])
        ast.assign_blocks(method)
    elif kind == "skip":
        pos = tuple(edit["pos"])
        st = _locate(out, pos)
        method = out.methods[pos[0]]
        _replace_stmt(method, st, [ast.Skip()])
        ast.assign_blocks(method)
    elif kind == "catch-wrap":
        name = edit["method"]
        if name not in out.methods:
            raise TargetMissing(f"no method {name!r}")
        method = out.methods[name]
        ret_expr = (parse_expr_text(edit["value"])
                    if edit.get("value") is not None else None)
        wrapped = ast.TryCatch(body=method.body,
                               handler=[ast.Return(expr=ret_expr)])
        method.body = [wrapped]
        ast.assign_blocks(method)
    elif kind == "replace-method":
        name = edit["method"]
        if name not in out.methods:
            raise TargetMissing(f"no method {name!r}")
        parser = Parser(edit["source"])
        new_method = parser.parse_method()
        if new_method.name != name:
            raise TargetMissing(
                f"replacement defines {new_method.name!r}, expected {name!r}")
        ast.assign_blocks(new_method)
        out.methods[name] = new_method
    else:
        raise ValueError(f"unknown edit kind {kind!r}")
    out.version = program.version + 1
    return out


def apply_patch(program: ast.Program, patch: CandidatePatch) -> ast.Program:
    if program.version != patch.origin_version:
        raise StaleProgramVersion(
            f"patch from version {patch.origin_version}, "
            f"program at {program.version}")
    return apply_edit(program, patch.edit)


def render_diff(program: ast.Program, patch: CandidatePatch) -> str:
    before = render_program(program).splitlines(keepends=True)
    after = render_program(apply_patch(program, patch)).splitlines(keepends=True)
    return "".join(difflib.unified_diff(
        before, after, fromfile="a/app.hpl", tofile="b/app.hpl"))


# --- enumeration -------------------------------------------------------------


def _failing_deref(program: ast.Program, failure: ExceptionInfo):
    """Locate the failing statement, the null base expression, and the
    dereference (access) expression built on it.

    Returns (stmt, base_text, access_text, in_assign_target).
    """
    st = ast.find_stmt(program, failure.location)
    if st is None:
        raise TargetMissing(f"no statement at {failure.location}")
    nid = failure.null_base_nid
    for root in ast.stmt_exprs(st):
        for e in _ordered_exprs(root):
            access = None
            if isinstance(e, (ast.FieldAccess, ast.IndexAccess)) \
                    and e.base.nid == nid:
                access = e
            elif isinstance(e, ast.Call) \
                    and any(a.nid == nid for a in e.args):
                access = e
            if access is None:
                continue
            base = ast.find_expr(access, nid)
            access_text = render_expr(access)
            # Substitution replaces every occurrence in the statement; a
            # literal landing in the assignment target would be unassignable.
            in_target = isinstance(st, ast.Assign) and any(
                render_expr(t) == access_text
                for t in _ordered_exprs(st.target))
            return st, render_expr(base), access_text, in_target
    raise TargetMissing("null dereference not found in statement")


def enumerate_null_recovery(program: ast.Program, failure: ExceptionInfo,
                            signature: str = "",
                            required_type: str = None) -> SearchSpace:
    """Strategies S1-S6 at the failing statement (NPEFix-style subset).

    S1/S2 substitute the dereference expression itself (guarded on the null
    base), so e.g. `base + per.cents * n` under null `per` yields the
    variant `base + 0 * n` — the shape of a hand-written null guard.
    `required_type` narrows S1/S2 variants; the dereference result is
    untyped, so it defaults to `any`.
    """
    if failure.kind != "null-deref":
        raise NotANullDeref(failure.kind)
    st, base_text, access_text, in_target = _failing_deref(program, failure)
    pos = list(failure.location)
    required = required_type or "any"
    scope = failure.scope_snapshot[-1]
    method = program.methods[failure.location[0]]
    space = SearchSpace(model=NULL_RECOVERY, failure_signature=signature)
    seen = set()

    def add(strategy, payload, edit):
        key = json.dumps(edit, sort_keys=True)
        if key in seen:
            return
        seen.add(key)
        patch = _mk_patch(NULL_RECOVERY, strategy, tuple(pos), payload, edit,
                          program.version, signature)
        space.patches.append(patch)

    # S1: inject an existing compatible variable for the dereference
    for var in scope:
        if var.name in (base_text, access_text):
            continue
        if not values.compatible(required, var.dtype):
            continue
        add("S1-inject-var", var.name, {
            "kind": "guard-substitute", "pos": pos, "guard": base_text,
            "expr": access_text, "replacement": var.name,
        })
    # S2: inject a manufactured default (not inside an assignment target —
    # a literal is not assignable)
    if not in_target:
        for src in DEFAULT_SOURCES[required]:
            add("S2-inject-default", src, {
                "kind": "guard-substitute", "pos": pos, "guard": base_text,
                "expr": access_text, "replacement": src,
            })
    # S3: skip the failing statement
    add("S3-skip", "", {"kind": "skip", "pos": pos})
    if method.ret != "void":
        # S4: return a manufactured default from the enclosing method
        for src in DEFAULT_SOURCES[method.ret]:
            add("S4-return-default", src, {
                "kind": "guard-return", "pos": pos, "guard": base_text,
                "value": src,
            })
        # S5: return an existing compatible variable
        for var in scope:
            if not values.compatible(method.ret, var.dtype):
                continue
            add("S5-return-var", var.name, {
                "kind": "guard-return", "pos": pos, "guard": base_text,
                "value": var.name,
            })
    else:
        # S6: plain return for void methods
        add("S6-return-void", "", {
            "kind": "guard-return", "pos": pos, "guard": base_text,
            "value": None,
        })
    return space


def enumerate_exception_stopper(program: ast.Program, failure: ExceptionInfo,
                                signature: str = "") -> SearchSpace:
    """Method-level catch-wrap patches for every frame of the failure stack,
    innermost frame first."""
    space = SearchSpace(model=EXCEPTION_STOPPER, failure_signature=signature)
    seen = set()

    def add(strategy, method_name, payload, value):
        edit = {"kind": "catch-wrap", "method": method_name, "value": value}
        key = json.dumps(edit, sort_keys=True)
        if key in seen:
            return
        seen.add(key)
        patch = _mk_patch(EXCEPTION_STOPPER, strategy, method_name, payload,
                          edit, program.version, signature)
        space.patches.append(patch)

    frames = list(zip(failure.stack, failure.scope_snapshot))
    for (method_name, _), scope in reversed(frames):
        method = program.methods[method_name]
        if method.ret == "void":
            add("catch-return-void", method_name, "", None)
            continue
        for var in scope:
            if values.compatible(method.ret, var.dtype):
                add("catch-return-var", method_name, var.name, var.name)
        default = DEFAULT_SOURCES[method.ret][0] if method.ret != "any" else "null"
        add("catch-return-default", method_name, default, default)
    return space


def stopper_space_size(program: ast.Program, failure: ExceptionInfo) -> int:
    """Closed-form size: sum over frames of (void ? 1 : compatible + 1)."""
    total = 0
    for (method_name, _), scope in zip(failure.stack, failure.scope_snapshot):
        method = program.methods[method_name]
        if method.ret == "void":
            total += 1
            continue
        total += sum(
            1 for var in scope if values.compatible(method.ret, var.dtype))
        total += 1
    return total


def human_patch(method_name: str, source: str,
                origin_version: int = 0) -> CandidatePatch:
    """Wrap a handwritten method replacement as a patch (enters regression
    directly in state valid)."""
    edit = {"kind": "replace-method", "method": method_name, "source": source}
    patch = _mk_patch("human", "replace-method", method_name,
                      hashlib.sha256(source.encode()).hexdigest()[:8],
                      edit, origin_version)
    patch.state = "valid"
    return patch
