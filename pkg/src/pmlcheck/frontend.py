"""Lexer, parser and validator for the PROMELA subset.

The accepted language covers declarations (mtype, chan, typedef, scalar
variables), proctypes with if/do/atomic/send/receive/assert/run, and an
init block of run statements.  Constructs outside the subset (rendezvous
channels, unless, timeout, d_step, goto, dynamic run) are rejected with a
SubsetError pointing at the offending token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .diagnostics import (
    Diagnostic,
    ParseFailure,
    PmlSyntaxError,
    ResolutionError,
    SubsetError,
)
from . import nodes as n

KEYWORDS = {
    "mtype", "chan", "of", "typedef", "bit", "bool", "byte", "int",
    "proctype", "active", "init", "run", "if", "fi", "do", "od",
    "skip", "break", "assert", "atomic", "else", "true", "false",
}

# Recognized PROMELA constructs deliberately left out of the subset.
REJECTED_KEYWORDS = {
    "unless", "timeout", "d_step", "goto", "never", "trace", "notrace",
    "provided", "priority", "c_code", "c_decl", "c_expr", "c_state",
    "c_track", "printf", "select", "for", "unsigned", "short", "pid",
    "enabled", "eval",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>/\*.*?\*/|//[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>::|->|&&|\|\||==|!=|<=|>=|[{}()\[\];,.=!?<>+\-*/%])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'num' | 'ident' | 'op' | 'eof'
    text: str
    pos: n.Pos


def preprocess(source: str) -> str:
    """Expand ``#define NAME value`` lines by plain textual substitution."""
    defines: dict[str, str] = {}
    out_lines = []
    for line in source.splitlines():
        m = re.match(r"\s*#define\s+(\w+)\s+(.*?)\s*$", line)
        if m:
            defines[m.group(1)] = m.group(2)
            out_lines.append("")  # keep line numbering
        else:
            out_lines.append(line)
    text = "\n".join(out_lines)
    if defines:
        pattern = re.compile(r"\b(" + "|".join(re.escape(k) for k in defines) + r")\b")
        text = pattern.sub(lambda m: defines[m.group(1)], text)
    return text


def lex(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise PmlSyntaxError(f"unexpected character {source[i]!r}", (line, col))
        text = m.group(0)
        if m.lastgroup not in ("ws", "comment"):
            kind = m.lastgroup if m.lastgroup in ("num", "ident") else "op"
            tokens.append(Token(kind, text, (line, col)))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        i = m.end()
    tokens.append(Token("eof", "<eof>", (line, col)))
    return tokens


_SEPARATORS = {";", "->"}
_PRECEDENCE = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.cur
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.cur.text == text and self.cur.kind in ("op", "ident")

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.advance()
        return None

    def expect(self, text: str) -> Token:
        if self.at(text):
            return self.advance()
        raise PmlSyntaxError(
            f"expected {text!r}, found {self.cur.text!r}", self.cur.pos
        )

    def check_rejected(self, tok: Token):
        if tok.text in REJECTED_KEYWORDS:
            raise SubsetError(
                f"{tok.text!r} is outside the supported subset", tok.pos
            )

    def ident(self) -> Token:
        tok = self.cur
        if tok.kind != "ident":
            raise PmlSyntaxError(f"expected identifier, found {tok.text!r}", tok.pos)
        self.check_rejected(tok)
        if tok.text in KEYWORDS:
            raise PmlSyntaxError(
                f"expected identifier, found keyword {tok.text!r}", tok.pos
            )
        return self.advance()

    def number(self) -> int:
        tok = self.cur
        if tok.kind != "num":
            raise PmlSyntaxError(f"expected number, found {tok.text!r}", tok.pos)
        self.advance()
        return int(tok.text)

    # -- expressions --------------------------------------------------------

    def parse_expr(self, level: int = 0) -> n.Expr:
        if level == len(_PRECEDENCE):
            return self.parse_unary()
        left = self.parse_expr(level + 1)
        while self.cur.text in _PRECEDENCE[level] and self.cur.kind == "op":
            op = self.advance()
            right = self.parse_expr(level + 1)
            left = n.Binary(op.text, left, right, pos=op.pos)
        return left

    def parse_unary(self) -> n.Expr:
        tok = self.cur
        if tok.text in ("-", "!") and tok.kind == "op":
            self.advance()
            return n.Unary(tok.text, self.parse_unary(), pos=tok.pos)
        return self.parse_primary()

    def parse_primary(self) -> n.Expr:
        tok = self.cur
        if tok.kind == "num":
            self.advance()
            return n.Num(int(tok.text), pos=tok.pos)
        if tok.text == "(":
            self.advance()
            e = self.parse_expr()
            self.expect(")")
            return e
        if tok.kind == "ident":
            self.check_rejected(tok)
            if tok.text == "true":
                self.advance()
                return n.Num(1, pos=tok.pos)
            if tok.text == "false":
                self.advance()
                return n.Num(0, pos=tok.pos)
            if tok.text in KEYWORDS:
                raise PmlSyntaxError(
                    f"expected expression, found keyword {tok.text!r}", tok.pos
                )
            self.advance()
            if self.at("["):
                self.advance()
                idx = self.parse_expr()
                self.expect("]")
                return n.Index(tok.text, idx, pos=tok.pos)
            if self.at("."):
                self.advance()
                fld = self.ident()
                return n.FieldRef(tok.text, fld.text, pos=tok.pos)
            return n.Name(tok.text, pos=tok.pos)
        raise PmlSyntaxError(f"expected expression, found {tok.text!r}", tok.pos)

    # -- statements ---------------------------------------------------------

    def skip_separators(self):
        while self.cur.text in _SEPARATORS and self.cur.kind == "op":
            self.advance()

    def at_sequence_end(self, closers: tuple[str, ...]) -> bool:
        return self.cur.kind == "eof" or self.cur.text in closers or self.at("::")

    def parse_sequence(self, closers: tuple[str, ...]) -> tuple[n.Stmt, ...]:
        stmts: list[n.Stmt] = []
        self.skip_separators()
        while not self.at_sequence_end(closers):
            stmts.append(self.parse_stmt())
            if not self.at_sequence_end(closers):
                if self.cur.text not in _SEPARATORS:
                    raise PmlSyntaxError(
                        f"expected ';' or '->', found {self.cur.text!r}", self.cur.pos
                    )
            self.skip_separators()
        return tuple(stmts)

    def parse_option(self, closers: tuple[str, ...]) -> tuple[n.Stmt, ...]:
        self.expect("::")
        tok = self.cur
        if self.at("else"):
            self.advance()
            body = self.parse_sequence(closers)
            return (n.Else(pos=tok.pos),) + body
        stmt = self.parse_stmt()
        if isinstance(stmt, n.ExprStmt) and self.at("->"):
            self.advance()
            body = self.parse_sequence(closers)
            return (n.GuardedExpr(stmt.expr, body, pos=tok.pos),)
        rest = self.parse_sequence(closers)
        return (stmt,) + rest

    def parse_options(self, closer: str) -> tuple[tuple[n.Stmt, ...], ...]:
        options: list[tuple[n.Stmt, ...]] = []
        closers = ("::", closer)
        while self.at("::"):
            options.append(self.parse_option(closers))
        if not options:
            raise PmlSyntaxError(
                f"expected at least one '::' option before {closer!r}", self.cur.pos
            )
        self.expect(closer)
        return tuple(options)

    def parse_stmt(self) -> n.Stmt:
        tok = self.cur
        self.check_rejected(tok)
        if self.at("skip"):
            self.advance()
            return n.Skip(pos=tok.pos)
        if self.at("break"):
            self.advance()
            return n.Break(pos=tok.pos)
        if self.at("else"):
            raise PmlSyntaxError("'else' is only allowed as an option guard", tok.pos)
        if self.at("assert"):
            self.advance()
            self.expect("(")
            e = self.parse_expr()
            self.expect(")")
            return n.Assert(e, pos=tok.pos)
        if self.at("atomic"):
            self.advance()
            self.expect("{")
            body = self.parse_sequence(("}",))
            self.expect("}")
            return n.Atomic(body, pos=tok.pos)
        if self.at("if"):
            self.advance()
            return n.IfFi(self.parse_options("fi"), pos=tok.pos)
        if self.at("do"):
            self.advance()
            return n.DoOd(self.parse_options("od"), pos=tok.pos)
        if self.at("run"):
            self.advance()
            name = self.ident()
            args: list[n.Expr] = []
            self.expect("(")
            if not self.at(")"):
                args.append(self.parse_expr())
                while self.accept(","):
                    args.append(self.parse_expr())
            self.expect(")")
            return n.Run(name.text, tuple(args), pos=tok.pos)
        if tok.text in n.SCALAR_KINDS and tok.kind == "ident":
            decl = self.parse_var_decl_single()
            return n.LocalDecl(decl, pos=tok.pos)
        # send / receive / assignment / expression
        if tok.kind == "ident" and tok.text not in KEYWORDS:
            nxt = self.peek()
            if nxt.text == "!" and self.peek(2).text != "=":
                self.advance()
                self.advance()
                exprs = [self.parse_expr()]
                while self.accept(","):
                    exprs.append(self.parse_expr())
                return n.Send(tok.text, tuple(exprs), pos=tok.pos)
            if nxt.text == "?":
                self.advance()
                self.advance()
                targets = [self.parse_target()]
                while self.accept(","):
                    targets.append(self.parse_target())
                return n.Receive(tok.text, tuple(targets), pos=tok.pos)
        expr = self.parse_expr()
        if self.at("="):
            eq = self.advance()
            if not isinstance(expr, (n.Name, n.Index, n.FieldRef)):
                raise PmlSyntaxError("assignment target must be a variable", eq.pos)
            value = self.parse_expr()
            return n.Assign(expr, value, pos=tok.pos)
        return n.ExprStmt(expr, pos=tok.pos)

    def parse_target(self) -> n.Target:
        e = self.parse_primary()
        if not isinstance(e, (n.Name, n.Index, n.FieldRef)):
            raise PmlSyntaxError("receive target must be a variable", self.cur.pos)
        return e

    # -- declarations -------------------------------------------------------

    def parse_var_decl_single(self, kinds: Optional[tuple[str, ...]] = None) -> n.VarDecl:
        kind = self.advance()
        if kinds and kind.text not in kinds:
            raise SubsetError(f"type {kind.text!r} not allowed here", kind.pos)
        name = self.ident()
        array_len = None
        if self.accept("["):
            array_len = self.number()
            self.expect("]")
            if array_len <= 0:
                raise PmlSyntaxError("array length must be positive", name.pos)
        init = None
        if self.accept("="):
            init = self.parse_expr()
        return n.VarDecl(name.text, kind.text, array_len, init, pos=kind.pos)

    def parse_model(self, typedef_names: set[str]) -> n.Model:
        mtypes: list[str] = []
        typedefs: list[n.TypedefDecl] = []
        chans: list[n.ChanDecl] = []
        globals_: list[n.VarDecl] = []
        procs: list[n.ProcDef] = []
        inits: list[n.Run] = []

        while self.cur.kind != "eof":
            tok = self.cur
            self.check_rejected(tok)
            if self.accept(";"):
                continue
            if self.at("mtype") and self.peek().text == "=":
                self.advance()
                self.expect("=")
                self.expect("{")
                mtypes.append(self.ident().text)
                while self.accept(","):
                    mtypes.append(self.ident().text)
                self.expect("}")
                continue
            if self.at("chan"):
                self.advance()
                name = self.ident()
                self.expect("=")
                self.expect("[")
                cap = self.number()
                self.expect("]")
                if cap < 1:
                    raise SubsetError(
                        "rendezvous channels (capacity 0) are not supported", name.pos
                    )
                self.expect("of")
                self.expect("{")
                kinds = [self.parse_chan_field_kind()]
                while self.accept(","):
                    kinds.append(self.parse_chan_field_kind())
                self.expect("}")
                chans.append(n.ChanDecl(name.text, cap, tuple(kinds), pos=tok.pos))
                continue
            if self.at("typedef"):
                self.advance()
                tname = self.ident()
                self.expect("{")
                fields: list[n.VarDecl] = []
                while not self.at("}"):
                    if self.cur.text not in n.SCALAR_KINDS:
                        raise SubsetError(
                            "typedef fields must have scalar types", self.cur.pos
                        )
                    fields.append(self.parse_var_decl_single())
                    self.skip_separators()
                self.expect("}")
                if not fields:
                    raise PmlSyntaxError("typedef requires at least one field", tname.pos)
                typedefs.append(n.TypedefDecl(tname.text, tuple(fields), pos=tok.pos))
                typedef_names.add(tname.text)
                continue
            if self.at("active") or self.at("proctype"):
                active = bool(self.accept("active"))
                if self.at("["):
                    raise SubsetError(
                        "active [n] multiplicity is not supported; use an init block",
                        self.cur.pos,
                    )
                self.expect("proctype")
                pname = self.ident()
                self.expect("(")
                params: list[n.VarDecl] = []
                while not self.at(")"):
                    if self.cur.text not in n.SCALAR_KINDS:
                        raise SubsetError(
                            "parameters must have scalar types", self.cur.pos
                        )
                    kind = self.advance().text
                    params.append(
                        n.VarDecl(self.ident().text, kind, pos=self.cur.pos)
                    )
                    while self.accept(","):
                        if self.cur.kind == "ident" and self.cur.text in n.SCALAR_KINDS:
                            kind = self.advance().text
                        params.append(
                            n.VarDecl(self.ident().text, kind, pos=self.cur.pos)
                        )
                    if not self.accept(";"):
                        break
                self.expect(")")
                self.expect("{")
                body = self.parse_sequence(("}",))
                self.expect("}")
                procs.append(
                    n.ProcDef(pname.text, tuple(params), body, active, pos=tok.pos)
                )
                continue
            if self.at("init"):
                self.advance()
                self.expect("{")
                body = self.parse_sequence(("}",))
                self.expect("}")
                for s in body:
                    if not isinstance(s, n.Run):
                        raise SubsetError(
                            "init may contain only run statements", s.pos
                        )
                    inits.append(s)
                continue
            if tok.text in n.SCALAR_KINDS or tok.text in typedef_names:
                decl = self.parse_var_decl_single()
                globals_.append(decl)
                while self.accept(","):
                    extra = self.ident()
                    alen = None
                    if self.accept("["):
                        alen = self.number()
                        self.expect("]")
                    einit = None
                    if self.accept("="):
                        einit = self.parse_expr()
                    globals_.append(
                        n.VarDecl(extra.text, decl.kind, alen, einit, pos=extra.pos)
                    )
                continue
            raise PmlSyntaxError(
                f"expected declaration, proctype or init, found {tok.text!r}", tok.pos
            )

        return n.Model(
            tuple(mtypes), tuple(typedefs), tuple(chans), tuple(globals_),
            tuple(procs), tuple(inits),
        )

    def parse_chan_field_kind(self) -> str:
        tok = self.cur
        if tok.text not in n.SCALAR_KINDS:
            raise SubsetError("channel fields must have scalar types", tok.pos)
        self.advance()
        return tok.text


# ---------------------------------------------------------------------------
# validation


def _walk_stmts(stmts, in_loop=False, in_init=False):
    """Yield (stmt, in_loop) over a statement tree."""
    for s in stmts:
        yield s, in_loop
        if isinstance(s, n.GuardedExpr):
            yield from _walk_stmts(s.body, in_loop, in_init)
        elif isinstance(s, n.IfFi):
            for opt in s.options:
                yield from _walk_stmts(opt, in_loop, in_init)
        elif isinstance(s, n.DoOd):
            for opt in s.options:
                yield from _walk_stmts(opt, True, in_init)
        elif isinstance(s, n.Atomic):
            yield from _walk_stmts(s.body, in_loop, in_init)


def _walk_exprs(stmt):
    if isinstance(stmt, (n.ExprStmt, n.Assert)):
        yield stmt.expr
    elif isinstance(stmt, n.Assign):
        yield stmt.target
        yield stmt.expr
    elif isinstance(stmt, n.GuardedExpr):
        yield stmt.guard
    elif isinstance(stmt, n.Send):
        yield from stmt.exprs
    elif isinstance(stmt, n.Receive):
        yield from stmt.targets
    elif isinstance(stmt, n.Run):
        yield from stmt.args
    elif isinstance(stmt, n.LocalDecl) and stmt.decl.init is not None:
        yield stmt.decl.init


def _subexprs(expr):
    yield expr
    if isinstance(expr, n.Unary):
        yield from _subexprs(expr.operand)
    elif isinstance(expr, n.Binary):
        yield from _subexprs(expr.left)
        yield from _subexprs(expr.right)
    elif isinstance(expr, n.Index):
        yield from _subexprs(expr.index)


class Validator:
    def __init__(self, model: n.Model, filename: str = "<input>"):
        self.model = model
        self.filename = filename
        self.diagnostics: list[Diagnostic] = []

    def error(self, message: str, pos: n.Pos):
        self.diagnostics.append(
            Diagnostic(pos[0], pos[1], "error", message, self.filename)
        )

    def run(self) -> list[Diagnostic]:
        m = self.model
        seen: dict[str, n.Pos] = {}

        def declare(name: str, pos: n.Pos):
            if name in seen:
                self.error(f"duplicate declaration of {name!r}", pos)
            seen[name] = pos

        for name in m.mtype_decls:
            declare(name, (0, 0))
        for t in m.type_decls:
            declare(t.name, t.pos)
            fseen = set()
            for f in t.fields:
                if f.name in fseen:
                    self.error(
                        f"duplicate field {f.name!r} in typedef {t.name!r}", f.pos
                    )
                fseen.add(f.name)
                if f.array_len is not None:
                    self.error("typedef fields may not be arrays", f.pos)
        for c in m.chan_decls:
            declare(c.name, c.pos)
        typedef_names = {t.name for t in m.type_decls}
        for v in m.var_decls:
            declare(v.name, v.pos)
            if v.kind not in n.SCALAR_KINDS and v.kind not in typedef_names:
                self.error(f"unknown type {v.kind!r}", v.pos)
            if v.kind in typedef_names and v.array_len is not None:
                self.error("arrays of typedef records are not supported", v.pos)
        for p in m.proctypes:
            declare(p.name, p.pos)

        for p in m.proctypes:
            self.check_proc(p)

        proc_names = {p.name: p for p in m.proctypes}
        for r in m.init_block:
            p = proc_names.get(r.proc)
            if p is None:
                self.error(f"init runs undeclared proctype {r.proc!r}", r.pos)
                continue
            if len(r.args) != len(p.params):
                self.error(
                    f"run {r.proc!r} passes {len(r.args)} args, expected {len(p.params)}",
                    r.pos,
                )
            for a in r.args:
                if not self.is_const(a):
                    self.error("run arguments must be constant expressions", r.pos)
        return self.diagnostics

    def is_const(self, e: n.Expr) -> bool:
        if isinstance(e, n.Num):
            return True
        if isinstance(e, n.Name):
            return e.ident in self.model.mtype_decls
        if isinstance(e, n.Unary):
            return self.is_const(e.operand)
        if isinstance(e, n.Binary):
            return self.is_const(e.left) and self.is_const(e.right)
        return False

    def check_proc(self, p: n.ProcDef):
        m = self.model
        local_names = {v.name for v in p.params}
        lseen = set(local_names)
        for s, in_loop in _walk_stmts(p.body):
            if isinstance(s, n.Break) and not in_loop:
                self.error("break outside of do..od", s.pos)
            if isinstance(s, n.Run):
                self.error("run is only allowed in the init block", s.pos)
            if isinstance(s, n.LocalDecl):
                if s.decl.kind not in n.SCALAR_KINDS:
                    self.error("local variables must have scalar types", s.decl.pos)
                if s.decl.name in lseen:
                    self.error(
                        f"duplicate local declaration of {s.decl.name!r}", s.decl.pos
                    )
                lseen.add(s.decl.name)
                local_names.add(s.decl.name)
            if isinstance(s, (n.IfFi, n.DoOd)):
                else_count = sum(
                    1 for opt in s.options if opt and isinstance(opt[0], n.Else)
                )
                if else_count > 1:
                    self.error("at most one else option per construct", s.pos)
            if isinstance(s, (n.Send, n.Receive)):
                try:
                    chan = m.chan(s.chan)
                except KeyError:
                    self.error(f"unknown channel {s.chan!r}", s.pos)
                    continue
                arity = (
                    len(s.exprs) if isinstance(s, n.Send) else len(s.targets)
                )
                if arity != len(chan.field_kinds):
                    self.error(
                        f"channel {s.chan!r} carries {len(chan.field_kinds)} fields, got {arity}",
                        s.pos,
                    )

        # scoping is proctype-wide, so collect locals first, then check names
        record_fields = {t.name: {f.name for f in t.fields} for t in m.type_decls}
        record_vars = {
            v.name: v.kind for v in m.var_decls if v.kind in record_fields
        }
        global_names = {v.name for v in m.var_decls}
        chan_names = {c.name for c in m.chan_decls}
        known = (
            set(m.mtype_decls) | global_names | local_names | chan_names
        )
        for s, _ in _walk_stmts(p.body):
            for top in _walk_exprs(s):
                for e in _subexprs(top):
                    if isinstance(e, n.Name) and e.ident not in known:
                        self.error(f"unknown name {e.ident!r}", e.pos)
                    elif isinstance(e, (n.Index, n.FieldRef)) and e.ident not in known:
                        self.error(f"unknown name {e.ident!r}", e.pos)
                    elif isinstance(e, n.FieldRef):
                        rec = record_vars.get(e.ident)
                        if rec is None:
                            self.error(
                                f"{e.ident!r} is not a record variable", e.pos
                            )
                        elif e.fieldname not in record_fields[rec]:
                            self.error(
                                f"record {rec!r} has no field {e.fieldname!r}", e.pos
                            )


# ---------------------------------------------------------------------------
# entry points


def try_parse(source: str, filename: str = "<input>"):
    """Parse and validate; returns (model_or_None, diagnostics)."""
    try:
        text = preprocess(source)
        tokens = lex(text)
        parser = _Parser(tokens)
        model = parser.parse_model(set())
    except (PmlSyntaxError, SubsetError, ResolutionError) as e:
        return None, [e.diagnostic(filename)]
    diagnostics = Validator(model, filename).run()
    if diagnostics:
        return None, diagnostics
    return model, []


def parse(source: str, filename: str = "<input>") -> n.Model:
    """Parse source text into a validated Model or raise ParseFailure."""
    model, diagnostics = try_parse(source, filename)
    if model is None:
        raise ParseFailure(diagnostics)
    return model


def parse_expr(source: str) -> n.Expr:
    """Parse a standalone expression (used for property atoms)."""
    parser = _Parser(lex(source))
    e = parser.parse_expr()
    if parser.cur.kind != "eof":
        raise PmlSyntaxError(
            f"trailing input after expression: {parser.cur.text!r}", parser.cur.pos
        )
    return e
