"""Source-to-source refinement from the modeling subset to C99.

Sixteen rules drive the translation: eight data rules (skip, bit/bool,
byte, array initializers, symbolic constants, mtype variables, typedefs,
channels) and eight control rules (if, do, send, receive, guards,
proctypes, nondeterministic choice via stub functions, init/main with
POSIX threads).

Two emission modes share one emitter: the plain mode produces the rule
conclusions as-is; trace mode additionally reports every executed
statement's control-flow-automaton edge through the runtime step API,
which serializes statements and emits a trace the conformance module
replays against the model.  Output is byte-deterministic either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import nodes as n
from .diagnostics import SubsetError
from .semantics import (
    Edge,
    ProcessAutomaton,
    build_automaton,
    build_automaton_map,
    compile_model,
)

RULE_NAMES = (
    "d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8",
    "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8",
)

_HEADER_NOTE = """\
/* Generated translation unit; do not edit.
 *
 * Notes on the translation scheme:
 *  - stub functions return 1 + rand() % n (not % (n-1)) so the last
 *    option of a nondeterministic site stays reachable;
 *  - if-chains pick the first true guard; when no guard holds the
 *    block is a no-op and rt_blocked() counts the event (strict mode
 *    retries until a guard holds).
 */
"""


@dataclass(frozen=True)
class StubSpec:
    name: str
    arity: int
    proctype: str


@dataclass
class RefinedAutomaton:
    """Automaton of a generated C function: the source control skeleton
    with each send/receive expanded into a per-field micro-step chain."""

    proc_name: str
    locations: tuple[int, ...]
    s0: int
    edges: tuple[Edge, ...]
    finals: frozenset[int]
    outgoing: dict[int, tuple[Edge, ...]]
    # chain id -> the source statement the chain collapses back to
    chains: dict[int, n.Stmt]
    # refined location -> source location
    collapse_map: dict[int, int]


@dataclass
class TargetUnit:
    name: str
    files: dict[str, str]
    stub_specs: list[StubSpec]
    collapse_maps: dict[str, dict[int, int]]
    coverage: dict[str, int] = field(default_factory=dict)

    @property
    def main_file(self) -> str:
        return f"{self.name}_gen.c"

    @property
    def text(self) -> str:
        return self.files[self.main_file]


def rule_coverage_report(unit: TargetUnit) -> str:
    lines = [f"rule coverage for {unit.main_file}"]
    for rule in RULE_NAMES:
        lines.append(f"{rule}: {unit.coverage.get(rule, 0)}")
    missing = [r for r in RULE_NAMES if unit.coverage.get(r, 0) == 0]
    lines.append(
        "all 16 rules fired" if not missing else "unused rules: " + " ".join(missing)
    )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# expression emission

# identifiers that must not be reused at file scope in the generated unit:
# C keywords plus names owned by libc headers or the runtime API
_C_RESERVED = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile
    _Bool _Complex _Imaginary
    main exit abort free malloc calloc realloc rand srand clock time assert
    stdin stdout stderr printf fprintf uchar index
    enqueue dequeue rt_chan rt_init rt_finish rt_register rt_self rt_log
    rt_step_begin rt_step_end rt_step_hold rt_guard rt_guard_hold rt_else
    rt_blocked rt_block_wait rt_atomic_wait""".split()
)


def c_name(name: str) -> str:
    """Model identifier as a safe C identifier."""
    return name + "_" if name in _C_RESERVED else name


def c_expr(e: n.Expr) -> str:
    if isinstance(e, n.Num):
        return str(e.value)
    if isinstance(e, n.Name):
        return c_name(e.ident)
    if isinstance(e, n.Index):
        return f"{c_name(e.ident)}[{c_expr(e.index)}]"
    if isinstance(e, n.FieldRef):
        return f"{c_name(e.ident)}.{e.fieldname}"
    if isinstance(e, n.Unary):
        return f"{e.op}{_paren(e.operand)}"
    if isinstance(e, n.Binary):
        return f"{_paren(e.left)} {e.op} {_paren(e.right)}"
    raise SubsetError(f"cannot refine expression {e!r}")


def _paren(e: n.Expr) -> str:
    text = c_expr(e)
    if isinstance(e, (n.Num, n.Name, n.Index, n.FieldRef)):
        return text
    return f"({text})"


# ---------------------------------------------------------------------------
# data refinement (rules d1..d8)


_SCALAR_C = {"bit": "uchar", "bool": "uchar", "byte": "uchar", "int": "int", "mtype": "int"}
_SCALAR_RULE = {"bit": "d2", "bool": "d2", "byte": "d3"}


def refine_declaration(decl, model: n.Model, coverage: Optional[dict] = None,
                       chan_index: int = 0) -> str:
    """Translate one declaration to C text (rules d1..d8)."""
    coverage = coverage if coverage is not None else {}

    def fire(rule: str):
        coverage[rule] = coverage.get(rule, 0) + 1

    if isinstance(decl, n.Skip):
        fire("d1")
        return "1"
    if isinstance(decl, n.MtypeDecl):
        fire("d5")
        total = len(decl.names)
        return "\n".join(
            f"#define {c_name(name)} {total - i}" for i, name in enumerate(decl.names)
        )
    if isinstance(decl, n.TypedefDecl):
        fire("d7")
        fields = " ".join(f"{_SCALAR_C[f.kind]} {f.name};" for f in decl.fields)
        return f"struct {decl.name} {{ {fields} }};"
    if isinstance(decl, n.ChanDecl):
        fire("d8")
        fields = " ".join(
            f"{_SCALAR_C[k]} f{i};" for i, k in enumerate(decl.field_kinds)
        )
        nfields = len(decl.field_kinds)
        return "\n".join(
            [
                f"struct channel_{chan_index} {{ {fields} }};",
                f"struct channel_{chan_index} {c_name(decl.name)}_slots[{decl.capacity}];",
                f"rt_chan {c_name(decl.name)} = RT_CHAN_INIT({decl.capacity}, {nfields});",
            ]
        )
    if isinstance(decl, n.VarDecl):
        record_types = {t.name for t in model.type_decls}
        if decl.kind in record_types:
            return f"struct {decl.kind} {c_name(decl.name)};"
        if decl.kind not in _SCALAR_C:
            raise SubsetError(f"cannot refine declaration of kind {decl.kind!r}", decl.pos)
        if decl.kind == "mtype":
            fire("d6")
        elif decl.kind in _SCALAR_RULE:
            fire(_SCALAR_RULE[decl.kind])
        ctype = _SCALAR_C[decl.kind]
        if decl.array_len is not None:
            if decl.init is not None:
                fire("d4")
                init = ", ".join([c_expr(decl.init)] * decl.array_len)
                return f"{ctype} {c_name(decl.name)}[{decl.array_len}] = {{{init}}};"
            return f"{ctype} {c_name(decl.name)}[{decl.array_len}];"
        if decl.init is not None:
            return f"{ctype} {c_name(decl.name)} = {c_expr(decl.init)};"
        return f"{ctype} {c_name(decl.name)};"
    raise SubsetError(f"cannot refine declaration {decl!r}")


# ---------------------------------------------------------------------------
# control refinement (rules c1..c8)


def _is_guard_head(stmt) -> bool:
    return isinstance(stmt, (n.GuardedExpr, n.Else))


def _site_is_nondet(options) -> bool:
    if len(options) < 2:
        return False
    return any(not (opt and _is_guard_head(opt[0])) for opt in options)


class _Breaker:
    """Break emission for the innermost do-od: a literal `break` maps
    through, except inside switch cases where it must become a goto."""

    def __init__(self, label: Optional[str], in_switch: bool = False, shared=None):
        self.label = label
        self.in_switch = in_switch
        self._shared = shared if shared is not None else {"used": False}

    @property
    def used(self) -> bool:
        return self._shared["used"]

    def emit(self) -> str:
        if self.label is not None and self.in_switch:
            self._shared["used"] = True
            return f"goto {self.label};"
        return "break;"

    def switch_view(self) -> "_Breaker":
        return _Breaker(self.label, True, self._shared)


class _ProcEmitter:
    def __init__(self, model: n.Model, proc: n.ProcDef, unit_state: dict,
                 strict: bool, trace: bool):
        self.model = model
        self.proc = proc
        self.strict = strict
        self.trace = trace
        self.unit = unit_state
        self.auto, self.edge_of = build_automaton_map(proc, model)
        self.lines: list[str] = []
        self.label_counter = 0
        self.local_kinds: dict[str, str] = {}
        for q in proc.params:
            self.local_kinds[q.name] = q.kind
        for s, _ in _walk_local_decls(proc.body):
            self.local_kinds[s.decl.name] = s.decl.kind

    # -- helpers --------------------------------------------------------------

    def fire(self, rule: str):
        cov = self.unit["coverage"]
        cov[rule] = cov.get(rule, 0) + 1

    def eid(self, stmt: n.Stmt) -> int:
        eids = self.edge_of.get(id(stmt))
        if not eids:
            raise AssertionError(f"no edge for {stmt!r} in {self.proc.name}")
        return eids[0]

    def new_label(self, tag: str) -> str:
        self.label_counter += 1
        return f"L_{self.proc.name}_{tag}{self.label_counter}"

    def out(self, indent: int, text: str):
        self.lines.append("    " * indent + text)

    def target_kind(self, t: n.Target) -> str:
        if isinstance(t, n.FieldRef):
            for v in self.model.var_decls:
                if v.name == t.ident:
                    for td in self.model.type_decls:
                        if td.name == v.kind:
                            for f in td.fields:
                                if f.name == t.fieldname:
                                    return f.kind
            return "int"
        name = t.ident
        if name in self.local_kinds:
            return self.local_kinds[name]
        for v in self.model.var_decls:
            if v.name == name:
                return v.kind
        return "int"

    def assign_text(self, s: n.Assign) -> str:
        value = c_expr(s.expr)
        if self.target_kind(s.target) in ("bit", "bool"):
            value = f"({value}) & 1"
        return f"{c_expr(s.target)} = {value};"

    # -- function emission ------------------------------------------------------

    def emit_proc(self) -> str:
        self.fire("c6")
        params = ", ".join(f"{_SCALAR_C[q.kind]} {c_name(q.name)}" for q in self.proc.params)
        self.out(0, f"void {c_name(self.proc.name)}({params or 'void'})")
        self.out(0, "{")
        param_names = {q.name for q in self.proc.params}
        for s, _ in _walk_local_decls(self.proc.body):
            d = s.decl
            if d.name in param_names:
                continue
            if d.array_len is not None:
                self.out(1, f"{_SCALAR_C[d.kind]} {c_name(d.name)}[{d.array_len}] = {{0}};")
            else:
                self.out(1, f"{_SCALAR_C[d.kind]} {c_name(d.name)} = 0;")
        self.emit_seq(self.proc.body, 1, _Breaker(None), False)
        self.out(0, "}")
        return "\n".join(self.lines)

    def emit_seq(self, stmts, indent: int, breaker: _Breaker, in_atomic: bool):
        for s in stmts:
            self.emit_stmt(s, indent, breaker, in_atomic)

    # one plain statement, with or without step instrumentation
    def emit_simple(self, s: n.Stmt, indent: int, in_atomic: bool, body: str):
        if not self.trace:
            self.out(indent, body)
        elif in_atomic:
            self.out(indent, f"rt_log({self.eid(s)}); {body}")
        else:
            self.out(indent, f"rt_step_begin({self.eid(s)}); {body} rt_step_end();")

    def emit_stmt(self, s: n.Stmt, indent: int, breaker: _Breaker, in_atomic: bool):
        if isinstance(s, n.Skip):
            self.fire("d1")
            self.emit_simple(s, indent, in_atomic, "1;")
        elif isinstance(s, n.Assign):
            self.emit_simple(s, indent, in_atomic, self.assign_text(s))
        elif isinstance(s, n.Assert):
            self.emit_simple(s, indent, in_atomic, f"assert({c_expr(s.expr)});")
        elif isinstance(s, n.LocalDecl):
            init = c_expr(s.decl.init) if s.decl.init is not None else "0"
            if s.decl.kind in ("bit", "bool"):
                init = f"({init}) & 1"
            self.emit_simple(s, indent, in_atomic, f"{c_name(s.decl.name)} = {init};")
        elif isinstance(s, n.ExprStmt):
            self.emit_wait(s, indent, in_atomic)
        elif isinstance(s, n.Break):
            self.emit_simple(s, indent, in_atomic, "1;")
            self.out(indent, breaker.emit())
        elif isinstance(s, n.Send):
            self.fire("c3")
            self.emit_send(s, indent, in_atomic)
        elif isinstance(s, n.Receive):
            self.fire("c4")
            self.emit_receive(s, indent, in_atomic)
        elif isinstance(s, n.Atomic):
            self.emit_atomic(s, indent, breaker, in_atomic)
        elif isinstance(s, n.IfFi):
            self.fire("c1")
            self.emit_choice(s.options, indent, breaker, in_atomic, loop=False)
        elif isinstance(s, n.DoOd):
            self.fire("c2")
            label = self.new_label("od_exit")
            inner = _Breaker(label)
            self.out(indent, "while (1) {")
            self.emit_choice(s.options, indent + 1, inner, in_atomic, loop=True)
            self.out(indent, "}")
            if inner.used:
                self.out(indent, f"{label}: ;")
        elif isinstance(s, n.GuardedExpr):
            # a guard outside an option head: wait, then run the body
            self._emit_wait_eid(self.eid(s), s.guard, indent, in_atomic)
            self.emit_seq(s.body, indent, breaker, in_atomic)
        elif isinstance(s, n.Run):
            raise SubsetError("run outside init cannot be refined", s.pos)
        else:
            raise SubsetError(f"cannot refine statement {s!r}", s.pos)

    def emit_wait(self, s: n.ExprStmt, indent: int, in_atomic: bool):
        self._emit_wait_eid(self.eid(s), s.expr, indent, in_atomic)

    def _emit_wait_eid(self, eid: int, expr: n.Expr, indent: int, in_atomic: bool):
        text = c_expr(expr)
        if not self.trace:
            if in_atomic:
                self.out(indent, f"while (!({text})) rt_atomic_wait();")
            else:
                self.out(indent, f"while (!({text})) rt_block_wait();")
        elif in_atomic:
            lbl = self.new_label("wait")
            self.out(indent, f"{lbl}:")
            self.out(indent, f"if (!({text})) {{ rt_atomic_wait(); goto {lbl}; }}")
            self.out(indent, f"rt_log({eid});")
        else:
            self.out(indent, f"while (!RT_GUARD({eid}, {text})) rt_block_wait();")

    def emit_send(self, s: n.Send, indent: int, in_atomic: bool):
        calls = [f"enqueue(&{c_name(s.chan)}, {c_expr(e)});" for e in s.exprs]
        if not self.trace:
            self.out(indent, f"rt_chan_wait_send(&{c_name(s.chan)});")
            for call in calls:
                self.out(indent, call)
            return
        if in_atomic:
            self.out(indent, f"rt_chan_wait_send(&{c_name(s.chan)}); rt_log({self.eid(s)});")
            for call in calls:
                self.out(indent, call)
        else:
            self.out(indent, f"rt_send_begin({self.eid(s)}, &{c_name(s.chan)});")
            for call in calls:
                self.out(indent, call)
            self.out(indent, "rt_step_end();")

    def emit_receive(self, s: n.Receive, indent: int, in_atomic: bool):
        assigns = []
        for t in s.targets:
            mask = " & 1" if self.target_kind(t) in ("bit", "bool") else ""
            assigns.append(f"{c_expr(t)} = dequeue(&{c_name(s.chan)}){mask};")
        if not self.trace:
            self.out(indent, f"rt_chan_wait_recv(&{c_name(s.chan)});")
            for a in assigns:
                self.out(indent, a)
            return
        if in_atomic:
            self.out(indent, f"rt_chan_wait_recv(&{c_name(s.chan)}); rt_log({self.eid(s)});")
        else:
            self.out(indent, f"rt_recv_begin({self.eid(s)}, &{c_name(s.chan)});")
        for a in assigns:
            self.out(indent, a)
        if not in_atomic:
            self.out(indent, "rt_step_end();")

    def emit_atomic(self, s: n.Atomic, indent: int, breaker: _Breaker, in_atomic: bool):
        if in_atomic:
            self.emit_seq(s.body, indent, breaker, True)
            return
        if not s.body:
            return
        if not self.trace:
            self.out(indent, "rt_step_hold();")
            self.emit_seq(s.body, indent, breaker, True)
            self.out(indent, "rt_step_end();")
            return
        first, rest = s.body[0], s.body[1:]
        if isinstance(first, n.ExprStmt):
            self.out(
                indent,
                f"while (!RT_GUARD_HOLD({self.eid(first)}, {c_expr(first.expr)})) rt_block_wait();",
            )
        elif isinstance(first, n.Send):
            self.fire("c3")
            self.out(indent, f"rt_send_begin({self.eid(first)}, &{c_name(first.chan)});")
            for e in first.exprs:
                self.out(indent, f"enqueue(&{c_name(first.chan)}, {c_expr(e)});")
        elif isinstance(first, n.Receive):
            self.fire("c4")
            self.out(indent, f"rt_recv_begin({self.eid(first)}, &{c_name(first.chan)});")
            for t in first.targets:
                mask = " & 1" if self.target_kind(t) in ("bit", "bool") else ""
                self.out(indent, f"{c_expr(t)} = dequeue(&{c_name(first.chan)}){mask};")
        else:
            self.out(indent, "rt_step_hold();")
            self.emit_stmt(first, indent, breaker, True)
            rest = s.body[1:]
        self.emit_seq(rest, indent, breaker, True)
        self.out(indent, "rt_step_end();")

    def emit_choice(self, options, indent: int, breaker: _Breaker,
                    in_atomic: bool, loop: bool):
        if _site_is_nondet(options):
            self.emit_nondet(options, indent, breaker, in_atomic)
            return
        if len(options) == 1 and not (options[0] and _is_guard_head(options[0][0])):
            self.emit_seq(options[0], indent, breaker, in_atomic)
            return
        guard_opts = [o for o in options if not isinstance(o[0], n.Else)]
        else_opts = [o for o in options if isinstance(o[0], n.Else)]
        # in trace mode the whole choice evaluates under the step lock, so
        # the taken branch (including else) is atomic w.r.t. the guards
        locked = self.trace and not in_atomic
        retry_label = None
        if not else_opts:
            if in_atomic:
                retry_label = self.new_label("ablk")
                self.out(indent, f"{retry_label}: ;")
            elif self.strict and not loop:
                retry_label = self.new_label("retry")
                self.out(indent, f"{retry_label}: ;")
        if locked:
            self.out(indent, "rt_step_hold();")
        first = True
        for opt in guard_opts:
            head = opt[0]
            assert isinstance(head, n.GuardedExpr)
            self.fire("c5")
            kw = "if" if first else "else if"
            self.out(indent, f"{kw} ({c_expr(head.guard)}) {{")
            if locked:
                self.out(indent + 1, f"rt_log({self.eid(head)}); rt_step_end();")
            elif self.trace and in_atomic:
                self.out(indent + 1, f"rt_log({self.eid(head)});")
            self.emit_seq(head.body, indent + 1, breaker, in_atomic)
            self.out(indent, "}")
            first = False
        for opt in else_opts:
            head, body = opt[0], opt[1:]
            self.out(indent, "else {")
            if locked:
                self.out(indent + 1, f"rt_log({self.eid(head)}); rt_step_end();")
            elif self.trace and in_atomic:
                self.out(indent + 1, f"rt_log({self.eid(head)});")
            self.emit_seq(body, indent + 1, breaker, in_atomic)
            self.out(indent, "}")
        if not else_opts:
            release = "rt_step_end(); " if locked else ""
            if in_atomic:
                self.out(indent, f"else {{ rt_atomic_wait(); goto {retry_label}; }}")
            elif loop:
                self.out(indent, f"else {{ {release}rt_block_wait(); }}")
            elif self.strict:
                self.out(indent, f"else {{ {release}rt_block_wait(); goto {retry_label}; }}")
            else:
                self.out(indent, f"else {{ {release}rt_blocked(); }}")

    def emit_nondet(self, options, indent: int, breaker: _Breaker, in_atomic: bool):
        self.fire("c7")
        breaker = breaker.switch_view()
        stub_name = f"stub_func_{len(self.unit['stubs'])}"
        self.unit["stubs"].append(StubSpec(stub_name, len(options), self.proc.name))
        locked = self.trace and not in_atomic
        self.out(indent, f"switch ({stub_name}()) {{")
        for k, opt in enumerate(options, start=1):
            self.out(indent, f"case {k}: {{")
            head = opt[0] if opt else None
            if isinstance(head, n.GuardedExpr):
                self.fire("c5")
                if locked:
                    self.out(indent + 1, "rt_step_hold();")
                self.out(indent + 1, f"if ({c_expr(head.guard)}) {{")
                if locked:
                    self.out(indent + 2, f"rt_log({self.eid(head)}); rt_step_end();")
                elif self.trace and in_atomic:
                    self.out(indent + 2, f"rt_log({self.eid(head)});")
                self.emit_seq(head.body, indent + 2, breaker, in_atomic)
                self.out(indent + 1, "}")
                if locked:
                    self.out(indent + 1, "else rt_step_end();")
                self.emit_seq(opt[1:], indent + 1, breaker, in_atomic)
            else:
                self.emit_seq(opt, indent + 1, breaker, in_atomic)
            self.out(indent + 1, "break;")
            self.out(indent, "}")
        self.out(indent, "}")


def _walk_local_decls(stmts):
    from .frontend import _walk_stmts

    for s, in_loop in _walk_stmts(stmts):
        if isinstance(s, n.LocalDecl):
            yield s, in_loop


# ---------------------------------------------------------------------------
# whole-program generation


def refine_statement(stmt, model: n.Model, proc: Optional[n.ProcDef] = None,
                     strict: bool = False) -> str:
    """Refine one statement (or a whole proctype) to plain C text."""
    if isinstance(stmt, n.ProcDef):
        unit_state = {"coverage": {}, "stubs": []}
        return _ProcEmitter(model, stmt, unit_state, strict, trace=False).emit_proc()
    if proc is None:
        raise ValueError("statement refinement needs the enclosing proctype")
    unit_state = {"coverage": {}, "stubs": []}
    em = _ProcEmitter(model, proc, unit_state, strict, trace=False)
    em.emit_stmt(stmt, 0, _Breaker(None), False)
    return "\n".join(em.lines)


def generate_program(model: n.Model, name: str = "model", strict: bool = False,
                     trace: bool = False) -> TargetUnit:
    """Emit the C translation unit plus stub specs and collapse maps."""
    coverage: dict[str, int] = {}
    unit_state = {"coverage": coverage, "stubs": []}
    parts: list[str] = [_HEADER_NOTE, '#include "runtime.h"', ""]

    if model.mtype_decls:
        parts.append(refine_declaration(n.MtypeDecl(model.mtype_decls), model, coverage))
    for t in model.type_decls:
        parts.append(refine_declaration(t, model, coverage))
    for i, c in enumerate(model.chan_decls):
        parts.append(refine_declaration(c, model, coverage, chan_index=i))
    for v in model.var_decls:
        parts.append(refine_declaration(v, model, coverage))
    parts.append("")

    proc_sections: dict[str, str] = {}
    collapse_maps: dict[str, dict[int, int]] = {}
    for proc in model.proctypes:
        em = _ProcEmitter(model, proc, unit_state, strict, trace)
        proc_sections[proc.name] = em.emit_proc()
        collapse_maps[proc.name] = dict(refined_automaton(proc, model).collapse_map)

    for spec in unit_state["stubs"]:
        parts.append(f"int {spec.name}(void) {{ return 1 + rand() % {spec.arity}; }}")
    if unit_state["stubs"]:
        parts.append("")

    for proc in model.proctypes:
        parts.append(proc_sections[proc.name])
        parts.append("")

    coverage["c8"] = coverage.get("c8", 0) + 1
    em0 = compile_model(model)
    for pid, (pname, args) in enumerate(em0.instances):
        arglist = ", ".join(str(v) for v in args)
        parts.append(
            f"static void *rt_entry_{pid}(void *arg) {{ (void)arg; "
            f"rt_register({pid}); {c_name(pname)}({arglist}); return NULL; }}"
        )
    parts.append("")
    nproc = len(em0.instances)
    main_lines = ["int main(void)", "{"]
    if nproc:
        names = ", ".join(f"thread{i + 1}" for i in range(nproc))
        main_lines.append(f"    pthread_t {names};")
    main_lines.append(f"    rt_init({nproc});")
    for i in range(nproc):
        main_lines.append(f"    pthread_create(&thread{i + 1}, NULL, rt_entry_{i}, NULL);")
    for i in range(nproc):
        main_lines.append(f"    pthread_join(thread{i + 1}, NULL);")
    main_lines.append("    rt_finish();")
    main_lines.append("    return 0;")
    main_lines.append("}")
    parts.append("\n".join(main_lines))

    text = "\n".join(parts) + "\n"
    return TargetUnit(
        name=name,
        files={f"{name}_gen.c": text},
        stub_specs=list(unit_state["stubs"]),
        collapse_maps=collapse_maps,
        coverage=coverage,
    )


# ---------------------------------------------------------------------------
# refined automata and collapse


def refined_automaton(proc: n.ProcDef, model: n.Model) -> RefinedAutomaton:
    """The control skeleton of the generated function: identical to the
    source automaton except sends/receives become per-field chains."""
    source = build_automaton(proc, model)
    chan_arity = {c.name: len(c.field_kinds) for c in model.chan_decls}
    next_loc = max(source.locations) + 1 if source.locations else 0
    edges: list[Edge] = []
    chains: dict[int, n.Stmt] = {}
    collapse: dict[int, int] = {loc: loc for loc in source.locations}
    chain_id = 0
    eid = 0
    for e in source.edges:
        if isinstance(e.stmt, (n.Send, n.Receive)):
            arity = chan_arity.get(e.stmt.chan, 1)
            chains[chain_id] = e.stmt
            cur = e.src
            for k in range(arity):
                last = k == arity - 1
                if last:
                    dst = e.dst
                else:
                    dst = next_loc
                    collapse[next_loc] = e.dst
                    next_loc += 1
                if isinstance(e.stmt, n.Send):
                    micro_stmt: n.Stmt = n.Send(e.stmt.chan, (e.stmt.exprs[k],))
                else:
                    micro_stmt = n.Receive(e.stmt.chan, (e.stmt.targets[k],))
                edges.append(
                    Edge(cur, dst, micro_stmt, eid, e.option_index,
                         e.in_atomic, micro=(chain_id, k))
                )
                eid += 1
                cur = dst
            chain_id += 1
        else:
            edges.append(Edge(e.src, e.dst, e.stmt, eid, e.option_index, e.in_atomic))
            eid += 1
    locations = tuple(sorted(collapse))
    outgoing: dict[int, tuple[Edge, ...]] = {loc: () for loc in locations}
    for e in edges:
        outgoing[e.src] = outgoing[e.src] + (e,)
    finals = frozenset(loc for loc in locations if not outgoing[loc])
    return RefinedAutomaton(
        proc_name=proc.name,
        locations=locations,
        s0=source.s0,
        edges=tuple(edges),
        finals=finals,
        outgoing=outgoing,
        chains=chains,
        collapse_map=collapse,
    )


def collapse_refined(dprime: RefinedAutomaton) -> ProcessAutomaton:
    """Contract micro-step chains; the result should equal the source."""
    cm = dprime.collapse_map
    edges: list[Edge] = []
    eid = 0
    for e in dprime.edges:
        if e.micro is not None:
            chain, step = e.micro
            if step != 0:
                continue  # the whole chain becomes one collapsed edge
            stmt = dprime.chains[chain]
            cur = e
            while True:
                nxts = [
                    x for x in dprime.outgoing.get(cur.dst, ())
                    if x.micro is not None and x.micro[0] == chain
                ]
                if not nxts:
                    break
                cur = nxts[0]
            edges.append(
                Edge(cm[e.src], cm[cur.dst], stmt, eid, e.option_index, e.in_atomic)
            )
        else:
            edges.append(
                Edge(cm[e.src], cm[e.dst], e.stmt, eid, e.option_index, e.in_atomic)
            )
        eid += 1
    locations = tuple(sorted(set(cm.values())))
    outgoing: dict[int, tuple[Edge, ...]] = {loc: () for loc in locations}
    for e in edges:
        outgoing[e.src] = outgoing[e.src] + (e,)
    finals = frozenset(loc for loc in locations if not outgoing[loc])
    return ProcessAutomaton(
        dprime.proc_name, locations, cm[dprime.s0], tuple(edges), finals,
        frozenset(), outgoing,
    )
