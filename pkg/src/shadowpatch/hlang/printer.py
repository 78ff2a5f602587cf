"""Canonical `.hpl` renderer.

Every program prints to one canonical text; diffs between program versions
are computed over this rendering, so formatting must be stable.
"""

from __future__ import annotations

from . import ast

_PREC = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "%": 6,
}
_UNARY_PREC = 7


def render_program(program: ast.Program) -> str:
    parts = []
    if program.routes:
        lines = ["routes {"]
        for r in program.routes:
            lines.append(f"  {r.verb} {r.pattern} -> {r.method}")
        lines.append("}")
        parts.append("\n".join(lines))
    for name in program.methods:
        parts.append(render_method(program.methods[name]))
    return "\n\n".join(parts) + "\n"


def render_method(method: ast.Method) -> str:
    params = ", ".join(f"{n}: {t}" for n, t in method.params)
    ret = "" if method.ret == "void" else f": {method.ret}"
    lines = [f"method {method.name}({params}){ret} {{"]
    _render_stmts(method.body, 1, lines)
    lines.append("}")
    return "\n".join(lines)


def _render_stmts(stmts, depth, lines):
    pad = "  " * depth
    for st in stmts:
        if isinstance(st, ast.Let):
            anno = "" if st.dtype == "any" else f": {st.dtype}"
            lines.append(f"{pad}let {st.name}{anno} = {render_expr(st.expr)};")
        elif isinstance(st, ast.Assign):
            lines.append(f"{pad}{render_expr(st.target)} = {render_expr(st.expr)};")
        elif isinstance(st, ast.If):
            lines.append(f"{pad}if ({render_expr(st.cond)}) {{")
            _render_stmts(st.then, depth + 1, lines)
            if st.els:
                lines.append(f"{pad}}} else {{")
                _render_stmts(st.els, depth + 1, lines)
            lines.append(f"{pad}}}")
        elif isinstance(st, ast.While):
            lines.append(f"{pad}while ({render_expr(st.cond)}) {{")
            _render_stmts(st.body, depth + 1, lines)
            lines.append(f"{pad}}}")
        elif isinstance(st, ast.Return):
            if st.expr is None:
                lines.append(f"{pad}return;")
            else:
                lines.append(f"{pad}return {render_expr(st.expr)};")
        elif isinstance(st, ast.Throw):
            lines.append(f"{pad}throw {render_expr(st.expr)};")
        elif isinstance(st, ast.Respond):
            lines.append(
                f"{pad}respond({render_expr(st.status)}, {render_expr(st.body)});")
        elif isinstance(st, ast.Skip):
            lines.append(f"{pad}skip;")
        elif isinstance(st, ast.TryCatch):
            lines.append(f"{pad}try {{")
            _render_stmts(st.body, depth + 1, lines)
            lines.append(f"{pad}}} catch {{")
            _render_stmts(st.handler, depth + 1, lines)
            lines.append(f"{pad}}}")
        elif isinstance(st, ast.ExprStmt):
            lines.append(f"{pad}{render_expr(st.expr)};")
        elif isinstance(st, ast.StorePut):
            lines.append(
                f"{pad}store.put({render_expr(st.key)}, {render_expr(st.value)});")
        else:  # pragma: no cover
            raise TypeError(f"unknown statement {st!r}")


def render_expr(e: ast.Expr, parent_prec: int = 0) -> str:
    if isinstance(e, ast.Lit):
        return render_literal(e.value)
    if isinstance(e, ast.Var):
        return e.name
    if isinstance(e, ast.RecordLit):
        if not e.fields:
            return "{}"
        inner = ", ".join(f"{n}: {render_expr(v)}" for n, v in e.fields)
        return f"{{ {inner} }}"
    if isinstance(e, ast.ListLit):
        return "[" + ", ".join(render_expr(v) for v in e.items) + "]"
    if isinstance(e, ast.FieldAccess):
        return f"{render_expr(e.base, _UNARY_PREC)}.{e.name}"
    if isinstance(e, ast.IndexAccess):
        return f"{render_expr(e.base, _UNARY_PREC)}[{render_expr(e.index)}]"
    if isinstance(e, ast.Call):
        return f"{e.name}(" + ", ".join(render_expr(a) for a in e.args) + ")"
    if isinstance(e, ast.StoreGet):
        return f"store.get({render_expr(e.key)})"
    if isinstance(e, ast.Unary):
        return f"{e.op}{render_expr(e.operand, _UNARY_PREC)}"
    if isinstance(e, ast.Binary):
        prec = _PREC[e.op]
        left = render_expr(e.left, prec - 1)
        right = render_expr(e.right, prec)  # left-assoc: parenthesize right ties
        text = f"{left} {e.op} {right}"
        if prec <= parent_prec:
            return f"({text})"
        return text
    raise TypeError(f"unknown expression {e!r}")  # pragma: no cover


def render_literal(value) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        out = value.replace("\\", "\\\\").replace('"', '\\"')
        out = out.replace("\n", "\\n").replace("\t", "\\t")
        return f'"{out}"'
    raise TypeError(f"unknown literal {value!r}")
