"""Typed AST for the supported PROMELA subset.

Positions are carried for diagnostics but excluded from structural
equality, so a parse / pretty-print / re-parse round trip compares equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

Pos = tuple[int, int]  # (line, column), 1-based

NOPOS: Pos = (0, 0)

# Scalar kinds of the subset.  Records are flattened into scalar slots
# before interpretation, channels carry tuples of scalar fields.
SCALAR_KINDS = ("bit", "bool", "byte", "mtype", "int")


@dataclass(frozen=True)
class Node:
    pos: Pos = field(default=NOPOS, compare=False, kw_only=True)


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Num(Node):
    value: int


@dataclass(frozen=True)
class Name(Node):
    ident: str


@dataclass(frozen=True)
class Index(Node):
    ident: str
    index: "Expr"


@dataclass(frozen=True)
class FieldRef(Node):
    ident: str
    fieldname: str


@dataclass(frozen=True)
class Unary(Node):
    op: str  # '-' or '!'
    operand: "Expr"


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Name, Index, FieldRef, Unary, Binary]

# assignable places
Target = Union[Name, Index, FieldRef]


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class Skip(Node):
    pass


@dataclass(frozen=True)
class ExprStmt(Node):
    """A bare expression used as a statement; blocks until nonzero."""

    expr: Expr


@dataclass(frozen=True)
class Assign(Node):
    target: Target
    expr: Expr


@dataclass(frozen=True)
class GuardedExpr(Node):
    """One ``:: guard -> body`` option of an if/do construct."""

    guard: Expr
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class Else(Node):
    """Leading statement of an ``:: else -> ...`` option."""

    pass


@dataclass(frozen=True)
class IfFi(Node):
    options: tuple[tuple["Stmt", ...], ...]


@dataclass(frozen=True)
class DoOd(Node):
    options: tuple[tuple["Stmt", ...], ...]


@dataclass(frozen=True)
class Send(Node):
    chan: str
    exprs: tuple[Expr, ...]


@dataclass(frozen=True)
class Receive(Node):
    chan: str
    targets: tuple[Target, ...]


@dataclass(frozen=True)
class Run(Node):
    proc: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Break(Node):
    pass


@dataclass(frozen=True)
class Assert(Node):
    expr: Expr


@dataclass(frozen=True)
class Atomic(Node):
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class LocalDecl(Node):
    decl: "VarDecl"


Stmt = Union[
    Skip,
    ExprStmt,
    Assign,
    GuardedExpr,
    Else,
    IfFi,
    DoOd,
    Send,
    Receive,
    Run,
    Break,
    Assert,
    Atomic,
    LocalDecl,
]


# ---------------------------------------------------------------------------
# declarations


@dataclass(frozen=True)
class VarDecl(Node):
    name: str
    kind: str  # one of SCALAR_KINDS or a typedef name
    array_len: Optional[int] = None
    init: Optional[Expr] = None


@dataclass(frozen=True)
class MtypeDecl(Node):
    names: tuple[str, ...]


@dataclass(frozen=True)
class TypedefDecl(Node):
    name: str
    fields: tuple[VarDecl, ...]


@dataclass(frozen=True)
class ChanDecl(Node):
    name: str
    capacity: int
    field_kinds: tuple[str, ...]


@dataclass(frozen=True)
class ProcDef(Node):
    name: str
    params: tuple[VarDecl, ...]
    body: tuple[Stmt, ...]
    active: bool = False


@dataclass(frozen=True)
class Model(Node):
    mtype_decls: tuple[str, ...] = ()
    type_decls: tuple[TypedefDecl, ...] = ()
    chan_decls: tuple[ChanDecl, ...] = ()
    var_decls: tuple[VarDecl, ...] = ()
    proctypes: tuple[ProcDef, ...] = ()
    init_block: tuple[Run, ...] = ()

    def proctype(self, name: str) -> ProcDef:
        for p in self.proctypes:
            if p.name == name:
                return p
        raise KeyError(name)

    def chan(self, name: str) -> ChanDecl:
        for c in self.chan_decls:
            if c.name == name:
                return c
        raise KeyError(name)

    def instances(self) -> tuple[tuple[str, tuple[Expr, ...]], ...]:
        """Process instances in spawn order: active proctypes, then init runs."""
        out: list[tuple[str, tuple[Expr, ...]]] = []
        for p in self.proctypes:
            if p.active:
                out.append((p.name, ()))
        for r in self.init_block:
            out.append((r.proc, r.args))
        return tuple(out)


def mtype_value(model: Model, name: str) -> int:
    """Value of a symbolic constant: first declared gets n, last gets 1."""
    n = len(model.mtype_decls)
    return n - model.mtype_decls.index(name)
