"""Parser for `.hpl` handler-language sources.

Grammar reference: docs/grammar.md. Parsing is deterministic; all errors
carry line/column positions.
"""

from __future__ import annotations

import re

from . import ast
from .errors import DuplicateMethod, HplSyntaxError, UnknownCallTarget

KEYWORDS = {
    "method", "routes", "let", "if", "else", "while", "return", "throw",
    "respond", "skip", "try", "catch", "true", "false", "null", "store",
}

BUILTINS = {"str", "len", "append"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>//[^\n]*)
  | (?P<nl>\n)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<str>"(?:[^"\\\n]|\\.)*")
  | (?P<op>==|!=|<=|>=|&&|\|\||->|[-+*/%<>!=(){}\[\],.;:])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col

    def __repr__(self):
        return f"Token({self.kind!r}, {self.text!r}, {self.line}:{self.col})"


def tokenize(source: str):
    tokens = []
    line, col, i = 1, 1, 0
    n = len(source)
    while i < n:
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise HplSyntaxError(f"unexpected character {source[i]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(text)
        else:
            tokens.append(Token(kind, text, line, col))
            col += len(text)
        i = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class Parser:
    def __init__(self, source: str):
        self.tokens = tokenize(source)
        self.i = 0

    # -- token plumbing --

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind in ("op", "ident")

    def accept(self, text: str):
        if self.at(text):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "eof":
            raise HplSyntaxError(
                f"expected {text!r}, found {tok.text or '<eof>'!r}",
                tok.line, tok.col,
            )
        return self.next()

    def expect_ident(self) -> Token:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise HplSyntaxError(
                f"expected identifier, found {tok.text or '<eof>'!r}",
                tok.line, tok.col,
            )
        return self.next()

    # -- top level --

    def parse_program(self) -> ast.Program:
        methods = {}
        routes = []
        while self.peek().kind != "eof":
            if self.at("routes"):
                routes.extend(self.parse_routes())
            elif self.at("method"):
                m = self.parse_method()
                if m.name in methods:
                    tok = self.peek()
                    raise DuplicateMethod(m.name, tok.line, tok.col)
                methods[m.name] = m
            else:
                tok = self.peek()
                raise HplSyntaxError(
                    f"expected 'method' or 'routes', found {tok.text!r}",
                    tok.line, tok.col,
                )
        program = ast.Program(methods=methods, routes=routes)
        for m in methods.values():
            ast.assign_blocks(m)
        self._check_targets(program)
        return program

    def _check_targets(self, program: ast.Program):
        for route in program.routes:
            if route.method not in program.methods:
                raise UnknownCallTarget(route.method, 0, 0)
        for m in program.methods.values():
            for st in ast.iter_stmts(m):
                for root in ast.stmt_exprs(st):
                    for e in ast.iter_exprs(root):
                        if isinstance(e, ast.Call) and e.name not in BUILTINS \
                                and e.name not in program.methods:
                            raise UnknownCallTarget(e.name, st.line, 0)

    def parse_routes(self):
        self.expect("routes")
        self.expect("{")
        routes = []
        while not self.accept("}"):
            verb = self.expect_ident().text
            path = self.parse_path()
            self.expect("->")
            target = self.expect_ident().text
            routes.append(ast.Route(verb=verb.upper(), pattern=path, method=target))
        return routes

    def parse_path(self) -> str:
        parts = []
        self.expect("/")
        parts.append("/")
        # Path segments end at '->'
        while not self.at("->"):
            tok = self.next()
            if tok.kind == "eof":
                raise HplSyntaxError("unterminated route path", tok.line, tok.col)
            parts.append(tok.text)
        return "".join(parts)

    def parse_method(self) -> ast.Method:
        self.expect("method")
        name = self.expect_ident().text
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                pname = self.expect_ident().text
                self.expect(":")
                params.append((pname, self.parse_type()))
                if not self.accept(","):
                    break
        self.expect(")")
        ret = "void"
        if self.accept(":"):
            ret = self.parse_type()
        body = self.parse_block()
        return ast.Method(name=name, params=params, ret=ret, body=body)

    def parse_type(self) -> str:
        tok = self.next()
        if tok.text not in ast.DECLARED_TYPES:
            raise HplSyntaxError(f"unknown type {tok.text!r}", tok.line, tok.col)
        return tok.text

    # -- statements --

    def parse_block(self):
        self.expect("{")
        stmts = []
        while not self.accept("}"):
            stmts.append(self.parse_stmt())
        return stmts

    def parse_stmt(self) -> ast.Stmt:
        tok = self.peek()
        st = self._parse_stmt_inner()
        st.line = tok.line
        return st

    def _parse_stmt_inner(self) -> ast.Stmt:
        if self.at("let"):
            self.next()
            name = self.expect_ident().text
            dtype = "any"
            if self.accept(":"):
                dtype = self.parse_type()
            self.expect("=")
            expr = self.parse_expr()
            self.expect(";")
            return ast.Let(name=name, dtype=dtype, expr=expr)
        if self.at("if"):
            self.next()
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            then = self.parse_block()
            els = []
            if self.accept("else"):
                if self.at("if"):
                    els = [self.parse_stmt()]
                else:
                    els = self.parse_block()
            return ast.If(cond=cond, then=then, els=els)
        if self.at("while"):
            self.next()
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            body = self.parse_block()
            return ast.While(cond=cond, body=body)
        if self.at("return"):
            self.next()
            expr = None
            if not self.at(";"):
                expr = self.parse_expr()
            self.expect(";")
            return ast.Return(expr=expr)
        if self.at("throw"):
            self.next()
            expr = self.parse_expr()
            self.expect(";")
            return ast.Throw(expr=expr)
        if self.at("respond"):
            self.next()
            self.expect("(")
            status = self.parse_expr()
            self.expect(",")
            body = self.parse_expr()
            self.expect(")")
            self.expect(";")
            return ast.Respond(status=status, body=body)
        if self.at("skip"):
            self.next()
            self.expect(";")
            return ast.Skip()
        if self.at("try"):
            self.next()
            body = self.parse_block()
            self.expect("catch")
            handler = self.parse_block()
            return ast.TryCatch(body=body, handler=handler)
        if self.at("store"):
            # store.put(k, v); as a statement; store.get is an expression.
            save = self.i
            self.next()
            self.expect(".")
            op = self.expect_ident().text
            if op == "put":
                self.expect("(")
                key = self.parse_expr()
                self.expect(",")
                value = self.parse_expr()
                self.expect(")")
                self.expect(";")
                return ast.StorePut(key=key, value=value)
            self.i = save  # store.get in expression position
        # assignment or expression statement
        expr = self.parse_expr()
        if self.accept("="):
            if not isinstance(expr, (ast.Var, ast.FieldAccess, ast.IndexAccess)):
                tok = self.peek()
                raise HplSyntaxError("invalid assignment target", tok.line, tok.col)
            rhs = self.parse_expr()
            self.expect(";")
            return ast.Assign(target=expr, expr=rhs)
        self.expect(";")
        if not isinstance(expr, ast.Call):
            tok = self.peek()
            raise HplSyntaxError(
                "only call expressions may be used as statements",
                tok.line, tok.col,
            )
        return ast.ExprStmt(expr=expr)

    # -- expressions --

    _BIN_LEVELS = [
        ("||",),
        ("&&",),
        ("==", "!="),
        ("<", "<=", ">", ">="),
        ("+", "-"),
        ("*", "/", "%"),
    ]

    def parse_expr(self, level=0) -> ast.Expr:
        if level == len(self._BIN_LEVELS):
            return self.parse_unary()
        left = self.parse_expr(level + 1)
        ops = self._BIN_LEVELS[level]
        while self.peek().kind == "op" and self.peek().text in ops:
            op = self.next().text
            right = self.parse_expr(level + 1)
            left = ast.Binary(op=op, left=left, right=right)
        return left

    def parse_unary(self) -> ast.Expr:
        if self.peek().kind == "op" and self.peek().text in ("!", "-"):
            op = self.next().text
            return ast.Unary(op=op, operand=self.parse_unary())
        return self.parse_postfix()

    def parse_postfix(self) -> ast.Expr:
        expr = self.parse_primary()
        while True:
            if self.accept("."):
                name = self.expect_ident().text
                expr = ast.FieldAccess(base=expr, name=name)
            elif self.accept("["):
                idx = self.parse_expr()
                self.expect("]")
                expr = ast.IndexAccess(base=expr, index=idx)
            else:
                return expr

    def parse_primary(self) -> ast.Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return ast.Lit(value=int(tok.text))
        if tok.kind == "str":
            self.next()
            return ast.Lit(value=_unescape(tok.text, tok))
        if self.accept("true"):
            return ast.Lit(value=True)
        if self.accept("false"):
            return ast.Lit(value=False)
        if self.accept("null"):
            return ast.Lit(value=None)
        if self.at("store"):
            self.next()
            self.expect(".")
            op = self.expect_ident()
            if op.text != "get":
                raise HplSyntaxError(
                    "only store.get is valid in expressions", op.line, op.col)
            self.expect("(")
            key = self.parse_expr()
            self.expect(")")
            return ast.StoreGet(key=key)
        if self.accept("("):
            expr = self.parse_expr()
            self.expect(")")
            return expr
        if self.at("{"):
            return self.parse_record_lit()
        if self.at("["):
            return self.parse_list_lit()
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            self.next()
            if self.accept("("):
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.parse_expr())
                        if not self.accept(","):
                            break
                self.expect(")")
                return ast.Call(name=tok.text, args=args)
            return ast.Var(name=tok.text)
        raise HplSyntaxError(
            f"unexpected token {tok.text or '<eof>'!r}", tok.line, tok.col)

    def parse_record_lit(self) -> ast.Expr:
        self.expect("{")
        fields = []
        if not self.at("}"):
            while True:
                name = self.expect_ident().text
                self.expect(":")
                fields.append((name, self.parse_expr()))
                if not self.accept(","):
                    break
        self.expect("}")
        return ast.RecordLit(fields=fields)

    def parse_list_lit(self) -> ast.Expr:
        self.expect("[")
        items = []
        if not self.at("]"):
            while True:
                items.append(self.parse_expr())
                if not self.accept(","):
                    break
        self.expect("]")
        return ast.ListLit(items=items)


def _unescape(text: str, tok: Token) -> str:
    body = text[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            i += 1
            esc = body[i]
            if esc not in _ESCAPES:
                raise HplSyntaxError(f"bad escape \\{esc}", tok.line, tok.col)
            out.append(_ESCAPES[esc])
        else:
            out.append(c)
        i += 1
    return "".join(out)


def parse(source: str) -> ast.Program:
    """Parse handler-language source into a Program (version 0)."""
    return Parser(source).parse_program()
