"""AST node definitions for the handler language.

Statements carry a stable position (method, block, index) assigned by
``assign_blocks`` after parsing; patches address statements through these
coordinates, so they must not change unless the method body changes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Union

DECLARED_TYPES = ("int", "bool", "str", "record", "list", "any")

_node_ids = itertools.count(1)


def next_node_id() -> int:
    return next(_node_ids)


# --- expressions -----------------------------------------------------------


@dataclass
class Expr:
    nid: int = field(default_factory=next_node_id, init=False, compare=False)


@dataclass
class Lit(Expr):
    value: object  # int | bool | str | None


@dataclass
class RecordLit(Expr):
    fields: list  # list[tuple[str, Expr]]


@dataclass
class ListLit(Expr):
    items: list


@dataclass
class Var(Expr):
    name: str


@dataclass
class FieldAccess(Expr):
    base: Expr
    name: str


@dataclass
class IndexAccess(Expr):
    base: Expr
    index: Expr


@dataclass
class Call(Expr):
    name: str
    args: list


@dataclass
class StoreGet(Expr):
    key: Expr


@dataclass
class Unary(Expr):
    op: str  # "!" | "-"
    operand: Expr


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


# --- statements ------------------------------------------------------------


@dataclass
class Stmt:
    # Filled in by assign_blocks.
    block: int = field(default=-1, init=False, compare=False)
    idx: int = field(default=-1, init=False, compare=False)
    line: int = field(default=0, init=False, compare=False)


@dataclass
class Let(Stmt):
    name: str
    dtype: str  # one of DECLARED_TYPES; "any" when unannotated
    expr: Expr


@dataclass
class Assign(Stmt):
    target: Expr  # Var | FieldAccess | IndexAccess
    expr: Expr


@dataclass
class If(Stmt):
    cond: Expr
    then: list
    els: list  # empty list when no else


@dataclass
class While(Stmt):
    cond: Expr
    body: list


@dataclass
class Return(Stmt):
    expr: Optional[Expr]


@dataclass
class Throw(Stmt):
    expr: Expr


@dataclass
class Respond(Stmt):
    status: Expr
    body: Expr


@dataclass
class Skip(Stmt):
    pass


@dataclass
class TryCatch(Stmt):
    body: list
    handler: list


@dataclass
class ExprStmt(Stmt):
    expr: Expr  # Call


@dataclass
class StorePut(Stmt):
    key: Expr
    value: Expr


# --- program structure -----------------------------------------------------


@dataclass
class Method:
    name: str
    params: list  # list[tuple[str, str]] (name, declared type)
    ret: str  # declared type or "void"
    body: list
    n_blocks: int = 0


@dataclass
class Route:
    verb: str
    pattern: str  # e.g. "/product/:id"
    method: str

    def segments(self):
        return [s for s in self.pattern.split("/") if s]


@dataclass
class Program:
    methods: dict  # name -> Method
    routes: list  # list[Route]
    version: int = 0

    def block_ids(self, method_name: str):
        """Statically enumerable block ids of one method."""
        seen = set()
        for st in iter_stmts(self.methods[method_name]):
            seen.add(st.block)
        return sorted(seen)


def sub_stmt_lists(st: Stmt):
    if isinstance(st, If):
        return [st.then, st.els]
    if isinstance(st, While):
        return [st.body]
    if isinstance(st, TryCatch):
        return [st.body, st.handler]
    return []


def iter_stmts(method: Method):
    """All statements of a method, in source order."""
    stack = [iter(method.body)]
    while stack:
        try:
            st = next(stack[-1])
        except StopIteration:
            stack.pop()
            continue
        yield st
        for sub in reversed(sub_stmt_lists(st)):
            if sub:
                stack.append(iter(sub))


def assign_blocks(method: Method) -> None:
    """Assign (block, idx) coordinates to every statement of a method.

    Block boundaries sit exactly at conditional/loop joins: a compound
    statement ends its block; each of its bodies opens a fresh block; the
    statements after it (if any) open the join block.
    """
    counter = itertools.count()

    def walk(stmts, entry):
        cur = entry
        idx = 0
        pending = False
        for st in stmts:
            if pending:
                cur = next(counter)
                idx = 0
                pending = False
            st.block = cur
            st.idx = idx
            idx += 1
            subs = sub_stmt_lists(st)
            if subs:
                for sub in subs:
                    if sub:
                        walk(sub, next(counter))
                pending = True

    walk(method.body, next(counter))
    method.n_blocks = max(
        (st.block for st in iter_stmts(method)), default=-1
    ) + 1


def find_stmt(program: Program, pos) -> Optional[Stmt]:
    """Locate the statement at position (method, block, idx), or None."""
    method_name, block, idx = pos
    method = program.methods.get(method_name)
    if method is None:
        return None
    for st in iter_stmts(method):
        if st.block == block and st.idx == idx:
            return st
    return None


def find_expr(root: Expr, nid: int) -> Optional[Expr]:
    for node in iter_exprs(root):
        if node.nid == nid:
            return node
    return None


def iter_exprs(root: Expr):
    stack = [root]
    while stack:
        e = stack.pop()
        yield e
        if isinstance(e, RecordLit):
            stack.extend(v for _, v in e.fields)
        elif isinstance(e, ListLit):
            stack.extend(e.items)
        elif isinstance(e, FieldAccess):
            stack.append(e.base)
        elif isinstance(e, IndexAccess):
            stack.extend([e.base, e.index])
        elif isinstance(e, Call):
            stack.extend(e.args)
        elif isinstance(e, StoreGet):
            stack.append(e.key)
        elif isinstance(e, Unary):
            stack.append(e.operand)
        elif isinstance(e, Binary):
            stack.extend([e.left, e.right])


def stmt_exprs(st: Stmt):
    if isinstance(st, Let):
        return [st.expr]
    if isinstance(st, Assign):
        return [st.target, st.expr]
    if isinstance(st, (If, While)):
        return [st.cond]
    if isinstance(st, Return):
        return [st.expr] if st.expr is not None else []
    if isinstance(st, Throw):
        return [st.expr]
    if isinstance(st, Respond):
        return [st.status, st.body]
    if isinstance(st, ExprStmt):
        return [st.expr]
    if isinstance(st, StorePut):
        return [st.key, st.value]
    return []
