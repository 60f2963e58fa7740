"""Per-process control-flow automata and the composed transition system.

Every proctype compiles to an automaton whose locations are the control
points of the body.  A global state holds one location per process
instance, the global valuation and the channel queues; `successors`
enumerates the interleaved transitions, executing atomic groups as one
composite step (releasing atomicity at a blocking point).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, NamedTuple, Optional

from . import nodes as n
from . import pretty
from .diagnostics import EvalError

INT_MIN, INT_MAX = -(2**31), 2**31 - 1

_ATOMIC_STEP_CAP = 10_000


def wrap_value(value: int, kind: str) -> int:
    if kind in ("bit", "bool"):
        return value & 1
    if kind in ("byte", "mtype"):
        return value & 0xFF
    # signed 32-bit wrap
    return ((value + 2**31) % 2**32) - 2**31


def _c_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def _c_mod(a: int, b: int) -> int:
    return a - _c_div(a, b) * b


# ---------------------------------------------------------------------------
# automaton


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    stmt: n.Stmt
    eid: int
    option_index: int = 0
    in_atomic: bool = False
    # micro-step marker used by refined automata: (chain_id, step_index)
    micro: Optional[tuple[int, int]] = None

    def label(self) -> str:
        return pretty.label(self.stmt)


@dataclass(frozen=True)
class ProcessAutomaton:
    proc_name: str
    locations: tuple[int, ...]
    s0: int
    edges: tuple[Edge, ...]
    finals: frozenset[int]
    atomic_interior: frozenset[int]
    outgoing: dict[int, tuple[Edge, ...]] = field(compare=False, hash=False, default_factory=dict)

    def edge(self, eid: int) -> Edge:
        return self.edges[eid]


class _Builder:
    def __init__(self, proc_name: str):
        self.proc_name = proc_name
        self.next_loc = 0
        self.edges: list[dict] = []
        self.atomic_interior: set[int] = set()
        self._origin: Optional[int] = None

    def new_loc(self) -> int:
        loc = self.next_loc
        self.next_loc += 1
        return loc

    def add_edge(self, src: int, dst: int, stmt: n.Stmt, option_index: int = 0,
                 in_atomic: bool = False):
        self.edges.append(dict(src=src, dst=dst, stmt=stmt, origin=self._origin,
                               option_index=option_index, in_atomic=in_atomic))

    def build_seq(self, stmts, entry: int, exit_: int, loop_exit, in_atomic: bool) -> None:
        cur = entry
        for i, s in enumerate(stmts):
            last = i == len(stmts) - 1
            nxt = exit_ if last else self.new_loc()
            self.build_stmt(s, cur, nxt, loop_exit, in_atomic)
            cur = nxt
        if not stmts:
            # empty sequence: connect with an implicit skip so control flows
            if entry != exit_:
                self._origin = None
                self.add_edge(entry, exit_, n.Skip(), in_atomic=in_atomic)

    def build_stmt(self, s: n.Stmt, entry: int, exit_: int, loop_exit, in_atomic: bool):
        self._origin = id(s)
        if isinstance(s, n.Break):
            if loop_exit is None:
                raise ValueError("break outside loop survived validation")
            self.add_edge(entry, loop_exit, s, in_atomic=in_atomic)
            # anything wired after a break is unreachable and pruned later
            return
        if isinstance(s, n.GuardedExpr):
            if s.body:
                mid = self.new_loc()
                self.add_edge(entry, mid, n.ExprStmt(s.guard, pos=s.pos),
                              in_atomic=in_atomic)
                if in_atomic:
                    self.atomic_interior.add(mid)
                self.build_seq(s.body, mid, exit_, loop_exit, in_atomic)
            else:
                self.add_edge(entry, exit_, n.ExprStmt(s.guard, pos=s.pos),
                              in_atomic=in_atomic)
            return
        if isinstance(s, n.IfFi):
            for oi, opt in enumerate(s.options):
                self.build_option(opt, oi, entry, exit_, loop_exit, in_atomic)
            return
        if isinstance(s, n.DoOd):
            for oi, opt in enumerate(s.options):
                self.build_option(opt, oi, entry, entry, exit_, in_atomic)
            return
        if isinstance(s, n.Atomic):
            # interior locations keep the composite step going
            marker = len(self.edges)
            inner_start = self.next_loc
            self.build_seq(s.body, entry, exit_, loop_exit, True)
            for loc in range(inner_start, self.next_loc):
                self.atomic_interior.add(loc)
            # entry edges of the region stay non-interior at src
            _ = marker
            return
        # simple statements: one edge
        self.add_edge(entry, exit_, s, in_atomic=in_atomic)

    def build_option(self, opt, option_index: int, entry: int, exit_: int,
                     loop_exit, in_atomic: bool):
        if not opt:
            self._origin = None
            self.add_edge(entry, exit_, n.Skip(), option_index, in_atomic)
            return
        first, rest = opt[0], opt[1:]
        if rest:
            mid = self.new_loc()
            if in_atomic:
                self.atomic_interior.add(mid)
            self.build_head(first, option_index, entry, mid, loop_exit, in_atomic)
            self.build_seq(rest, mid, exit_, loop_exit, in_atomic)
        else:
            self.build_head(first, option_index, entry, exit_, loop_exit, in_atomic)

    def build_head(self, s, option_index, entry, exit_, loop_exit, in_atomic):
        before = len(self.edges)
        self.build_stmt(s, entry, exit_, loop_exit, in_atomic)
        # tag the edges that leave `entry` with their option index
        for e in self.edges[before:]:
            if e["src"] == entry:
                e["option_index"] = option_index

    def finish(self, s0: int) -> ProcessAutomaton:
        # prune unreachable locations, keep construction order
        out: dict[int, list[dict]] = {}
        for e in self.edges:
            out.setdefault(e["src"], []).append(e)
        reachable = {s0}
        frontier = [s0]
        while frontier:
            loc = frontier.pop()
            for e in out.get(loc, ()):
                if e["dst"] not in reachable:
                    reachable.add(e["dst"])
                    frontier.append(e["dst"])
        keep = [e for e in self.edges if e["src"] in reachable]
        locs = sorted(reachable)
        edges = tuple(
            Edge(e["src"], e["dst"], e["stmt"], eid, e["option_index"], e["in_atomic"])
            for eid, e in enumerate(keep)
        )
        origin_map: dict[int, list[int]] = {}
        for eid, e in enumerate(keep):
            if e["origin"] is not None:
                origin_map.setdefault(e["origin"], []).append(eid)
        outgoing: dict[int, tuple[Edge, ...]] = {loc: () for loc in locs}
        for e in edges:
            outgoing[e.src] = outgoing[e.src] + (e,)
        finals = frozenset(loc for loc in locs if not outgoing[loc])
        auto = ProcessAutomaton(
            self.proc_name, tuple(locs), s0, edges, finals,
            frozenset(self.atomic_interior & reachable), outgoing,
        )
        self.origin_map = origin_map
        return auto


def build_automaton(proc: n.ProcDef, model: n.Model) -> ProcessAutomaton:
    """Compile a validated proctype body into its control-flow automaton."""
    b = _Builder(proc.name)
    s0 = b.new_loc()
    end = b.new_loc()
    b.build_seq(proc.body, s0, end, None, False)
    return b.finish(s0)


def build_automaton_map(proc: n.ProcDef, model: n.Model):
    """Automaton plus a map from id(stmt node) to the edge ids it produced."""
    b = _Builder(proc.name)
    s0 = b.new_loc()
    end = b.new_loc()
    b.build_seq(proc.body, s0, end, None, False)
    auto = b.finish(s0)
    return auto, b.origin_map


# ---------------------------------------------------------------------------
# executable model


class GlobalState(NamedTuple):
    locs: tuple[int, ...]
    locals: tuple[tuple, ...]
    globals: tuple
    chans: tuple[tuple, ...]


@dataclass(frozen=True)
class Transition:
    pid: int
    proc_name: str
    edges: tuple[Edge, ...]
    source: GlobalState
    target: GlobalState

    @property
    def label(self) -> str:
        if len(self.edges) == 1:
            return self.edges[0].label()
        return "atomic { " + "; ".join(e.label() for e in self.edges) + " }"


@dataclass(frozen=True)
class _Slot:
    name: str
    kind: str
    size: Optional[int]  # None for scalars


class ExecModel:
    """Interpreter-ready form of a Model: slot tables plus automata."""

    def __init__(self, model: n.Model):
        self.model = model
        self.global_slots: list[_Slot] = []
        self.global_index: dict[str, int] = {}
        record_types = {t.name: t for t in model.type_decls}
        for v in model.var_decls:
            if v.kind in record_types:
                for f in record_types[v.kind].fields:
                    self._add_global(_Slot(f"{v.name}.{f.name}", f.kind, None))
            else:
                self._add_global(_Slot(v.name, v.kind, v.array_len))
        self.chan_index = {c.name: i for i, c in enumerate(model.chan_decls)}
        self.chans = tuple(model.chan_decls)
        self.mtype_values = {
            name: n.mtype_value(model, name) for name in model.mtype_decls
        }
        self.automata: dict[str, ProcessAutomaton] = {
            p.name: build_automaton(p, model) for p in model.proctypes
        }
        self.local_slots: dict[str, list[_Slot]] = {}
        for p in model.proctypes:
            slots = [_Slot(q.name, q.kind, q.array_len) for q in p.params]
            for s, _ in _walk_local_decls(p.body):
                slots.append(_Slot(s.decl.name, s.decl.kind, s.decl.array_len))
            self.local_slots[p.name] = slots
        self.instances: list[tuple[str, tuple[int, ...]]] = []
        for pname, args in model.instances():
            vals = tuple(self._const(a) for a in args)
            self.instances.append((pname, vals))
        counts: dict[str, int] = {}
        for pname, _ in self.instances:
            counts[pname] = counts.get(pname, 0) + 1
        seen: dict[str, int] = {}
        self.instance_names: list[str] = []
        for pname, _ in self.instances:
            if counts[pname] > 1:
                k = seen.get(pname, 0)
                seen[pname] = k + 1
                self.instance_names.append(f"{pname}[{k}]")
            else:
                self.instance_names.append(pname)

    def _add_global(self, slot: _Slot):
        self.global_index[slot.name] = len(self.global_slots)
        self.global_slots.append(slot)

    def _const(self, e: n.Expr) -> int:
        if isinstance(e, n.Num):
            return e.value
        if isinstance(e, n.Name) and e.ident in self.mtype_values:
            return self.mtype_values[e.ident]
        if isinstance(e, n.Unary) and e.op == "-":
            return -self._const(e.operand)
        if isinstance(e, n.Binary):
            lhs, rhs = self._const(e.left), self._const(e.right)
            return _apply_binop(e.op, lhs, rhs, e.pos)
        raise EvalError("expected a constant expression", e.pos)

    # -- state construction --------------------------------------------------

    def _default(self, slot: _Slot, value: Optional[int]) -> object:
        v = wrap_value(value or 0, slot.kind)
        if slot.size is not None:
            return (v,) * slot.size
        return v

    def initial_state(self) -> GlobalState:
        record_types = {t.name: t for t in self.model.type_decls}
        values: list = []
        i = 0
        for v in self.model.var_decls:
            if v.kind in record_types:
                for _f in record_types[v.kind].fields:
                    values.append(self._default(self.global_slots[i], 0))
                    i += 1
            else:
                init = self._const(v.init) if v.init is not None else 0
                values.append(self._default(self.global_slots[i], init))
                i += 1
        locs, locals_ = [], []
        for pid, (pname, args) in enumerate(self.instances):
            auto = self.automata[pname]
            locs.append(auto.s0)
            slots = self.local_slots[pname]
            vals: list = []
            for si, slot in enumerate(slots):
                if si < len(args):
                    vals.append(self._default(slot, args[si]))
                else:
                    vals.append(self._default(slot, 0))
            locals_.append(tuple(vals))
        return GlobalState(
            tuple(locs), tuple(locals_), tuple(values),
            tuple(() for _ in self.chans),
        )

    def automaton_of(self, pid: int) -> ProcessAutomaton:
        return self.automata[self.instances[pid][0]]

    def local_index(self, pid: int, name: str) -> Optional[int]:
        for i, slot in enumerate(self.local_slots[self.instances[pid][0]]):
            if slot.name == name:
                return i
        return None

    # -- expression evaluation ----------------------------------------------

    def lookup(self, state: GlobalState, pid: int, name: str, pos: n.Pos):
        li = self.local_index(pid, name)
        if li is not None:
            return state.locals[pid][li]
        gi = self.global_index.get(name)
        if gi is not None:
            return state.globals[gi]
        if name in self.mtype_values:
            return self.mtype_values[name]
        raise EvalError(f"unknown name {name!r}", pos)

    def eval(self, state: GlobalState, pid: int, e: n.Expr) -> int:
        if isinstance(e, n.Num):
            return e.value
        if isinstance(e, n.Name):
            v = self.lookup(state, pid, e.ident, e.pos)
            if isinstance(v, tuple):
                raise EvalError(f"array {e.ident!r} used without index", e.pos)
            return v
        if isinstance(e, n.Index):
            arr = self.lookup(state, pid, e.ident, e.pos)
            if not isinstance(arr, tuple):
                raise EvalError(f"{e.ident!r} is not an array", e.pos)
            idx = self.eval(state, pid, e.index)
            if not 0 <= idx < len(arr):
                raise EvalError(f"index {idx} out of range for {e.ident!r}", e.pos)
            return arr[idx]
        if isinstance(e, n.FieldRef):
            gi = self.global_index.get(f"{e.ident}.{e.fieldname}")
            if gi is None:
                raise EvalError(f"unknown field {e.ident}.{e.fieldname}", e.pos)
            return state.globals[gi]
        if isinstance(e, n.Unary):
            v = self.eval(state, pid, e.operand)
            return -v if e.op == "-" else (0 if v else 1)
        if isinstance(e, n.Binary):
            if e.op == "&&":
                return 1 if self.eval(state, pid, e.left) and self.eval(state, pid, e.right) else 0
            if e.op == "||":
                return 1 if self.eval(state, pid, e.left) or self.eval(state, pid, e.right) else 0
            lhs = self.eval(state, pid, e.left)
            rhs = self.eval(state, pid, e.right)
            return _apply_binop(e.op, lhs, rhs, e.pos)
        raise EvalError(f"cannot evaluate {e!r}", (0, 0))

    # -- statement semantics --------------------------------------------------

    def executable_edge(self, state: GlobalState, pid: int, edge: Edge) -> bool:
        s = edge.stmt
        if isinstance(s, n.Else):
            auto = self.automaton_of(pid)
            for sib in auto.outgoing[edge.src]:
                if sib.eid != edge.eid and not isinstance(sib.stmt, n.Else):
                    if self.executable_edge(state, pid, sib):
                        return False
            return True
        return self.executable_stmt(state, pid, s)

    def executable_stmt(self, state: GlobalState, pid: int, s: n.Stmt) -> bool:
        if isinstance(s, n.ExprStmt):
            return self.eval(state, pid, s.expr) != 0
        if isinstance(s, n.GuardedExpr):
            return self.eval(state, pid, s.guard) != 0
        if isinstance(s, n.Send):
            ci = self.chan_index[s.chan]
            return len(state.chans[ci]) < self.chans[ci].capacity
        if isinstance(s, n.Receive):
            ci = self.chan_index[s.chan]
            return len(state.chans[ci]) > 0
        return True

    def _set_slot(self, state: GlobalState, pid: int, target: n.Target, value: int) -> GlobalState:
        if isinstance(target, n.FieldRef):
            name = f"{target.ident}.{target.fieldname}"
            gi = self.global_index.get(name)
            if gi is None:
                raise EvalError(f"unknown field {name}", target.pos)
            slot = self.global_slots[gi]
            new = wrap_value(value, slot.kind)
            g = list(state.globals)
            g[gi] = new
            return state._replace(globals=tuple(g))
        name = target.ident
        idx = None
        if isinstance(target, n.Index):
            idx = self.eval(state, pid, target.index)
        li = self.local_index(pid, name)
        if li is not None:
            slot = self.local_slots[self.instances[pid][0]][li]
            cur = state.locals[pid][li]
            new = self._store(slot, cur, idx, value, target.pos)
            mine = list(state.locals[pid])
            mine[li] = new
            all_locals = list(state.locals)
            all_locals[pid] = tuple(mine)
            return state._replace(locals=tuple(all_locals))
        gi = self.global_index.get(name)
        if gi is None:
            raise EvalError(f"unknown name {name!r}", target.pos)
        slot = self.global_slots[gi]
        cur = state.globals[gi]
        new = self._store(slot, cur, idx, value, target.pos)
        g = list(state.globals)
        g[gi] = new
        return state._replace(globals=tuple(g))

    def _store(self, slot: _Slot, cur, idx, value: int, pos: n.Pos):
        wrapped = wrap_value(value, slot.kind)
        if slot.size is not None:
            if idx is None:
                raise EvalError(f"array {slot.name!r} assigned without index", pos)
            if not 0 <= idx < slot.size:
                raise EvalError(f"index {idx} out of range for {slot.name!r}", pos)
            arr = list(cur)
            arr[idx] = wrapped
            return tuple(arr)
        if idx is not None:
            raise EvalError(f"{slot.name!r} is not an array", pos)
        return wrapped

    def apply_edge(self, state: GlobalState, pid: int, edge: Edge) -> GlobalState:
        s = edge.stmt
        if isinstance(s, n.Assign):
            value = self.eval(state, pid, s.expr)
            state = self._set_slot(state, pid, s.target, value)
        elif isinstance(s, n.Send):
            ci = self.chan_index[s.chan]
            kinds = self.chans[ci].field_kinds
            msg = tuple(
                wrap_value(self.eval(state, pid, e), kinds[i])
                for i, e in enumerate(s.exprs)
            )
            chans = list(state.chans)
            chans[ci] = chans[ci] + (msg,)
            state = state._replace(chans=tuple(chans))
        elif isinstance(s, n.Receive):
            ci = self.chan_index[s.chan]
            msg = state.chans[ci][0]
            chans = list(state.chans)
            chans[ci] = chans[ci][1:]
            state = state._replace(chans=tuple(chans))
            for i, target in enumerate(s.targets):
                state = self._set_slot(state, pid, target, msg[i])
        elif isinstance(s, n.LocalDecl):
            value = self.eval(state, pid, s.decl.init) if s.decl.init is not None else 0
            li = self.local_index(pid, s.decl.name)
            slot = self.local_slots[self.instances[pid][0]][li]
            mine = list(state.locals[pid])
            mine[li] = self._default(slot, value)
            all_locals = list(state.locals)
            all_locals[pid] = tuple(mine)
            state = state._replace(locals=tuple(all_locals))
        # Skip / ExprStmt / Assert / Else only move control
        locs = list(state.locs)
        locs[pid] = edge.dst
        return state._replace(locs=tuple(locs))

    # -- composition -----------------------------------------------------------

    def _extend_atomic(self, state: GlobalState, pid: int,
                       done: tuple[Edge, ...], steps: int) -> Iterator[tuple[tuple[Edge, ...], GlobalState]]:
        auto = self.automaton_of(pid)
        loc = state.locs[pid]
        if loc not in auto.atomic_interior:
            yield done, state
            return
        if steps > _ATOMIC_STEP_CAP:
            raise EvalError(
                f"atomic region exceeded {_ATOMIC_STEP_CAP} steps in {auto.proc_name!r}"
            )
        candidates = [
            e for e in auto.outgoing[loc] if self.executable_edge(state, pid, e)
        ]
        if not candidates:
            # blocked mid-way: atomicity is released here
            yield done, state
            return
        for e in candidates:
            nxt = self.apply_edge(state, pid, e)
            yield from self._extend_atomic(nxt, pid, done + (e,), steps + 1)

    def transitions_of(self, state: GlobalState, pid: int) -> list[Transition]:
        auto = self.automaton_of(pid)
        out = []
        for e in auto.outgoing[state.locs[pid]]:
            if not self.executable_edge(state, pid, e):
                continue
            first = self.apply_edge(state, pid, e)
            for edges, target in self._extend_atomic(first, pid, (e,), 0):
                out.append(Transition(pid, self.instance_names[pid], edges, state, target))
        return out

    def successors(self, state: GlobalState) -> list[Transition]:
        out: list[Transition] = []
        for pid in range(len(self.instances)):
            out.extend(self.transitions_of(state, pid))
        return out

    def at_final(self, state: GlobalState, pid: int) -> bool:
        return state.locs[pid] in self.automaton_of(pid).finals


def _walk_local_decls(stmts):
    from .frontend import _walk_stmts

    for s, in_loop in _walk_stmts(stmts):
        if isinstance(s, n.LocalDecl):
            yield s, in_loop


@lru_cache(maxsize=64)
def compile_model(model: n.Model) -> ExecModel:
    return ExecModel(model)


def initial_state(model: n.Model) -> GlobalState:
    return compile_model(model).initial_state()


def successors(model: n.Model, state: GlobalState) -> list[Transition]:
    """All interleaved transitions from `state`, deterministically ordered."""
    return compile_model(model).successors(state)


def executable(model: n.Model, state: GlobalState, pid: int, stmt: n.Stmt) -> bool:
    """Statement-level executability (Else needs edge context, see ExecModel)."""
    return compile_model(model).executable_stmt(state, pid, stmt)


def digest(state: GlobalState) -> bytes:
    """Content digest of the canonical state encoding, for visited sets."""
    return hashlib.blake2b(repr(state).encode(), digest_size=16).digest()


def _apply_binop(op: str, lhs: int, rhs: int, pos: n.Pos) -> int:
    if op == "+":
        return lhs + rhs
    if op == "-":
        return lhs - rhs
    if op == "*":
        return lhs * rhs
    if op == "/":
        if rhs == 0:
            raise EvalError("division by zero", pos)
        return _c_div(lhs, rhs)
    if op == "%":
        if rhs == 0:
            raise EvalError("modulo by zero", pos)
        return _c_mod(lhs, rhs)
    if op == "==":
        return 1 if lhs == rhs else 0
    if op == "!=":
        return 1 if lhs != rhs else 0
    if op == "<":
        return 1 if lhs < rhs else 0
    if op == "<=":
        return 1 if lhs <= rhs else 0
    if op == ">":
        return 1 if lhs > rhs else 0
    if op == ">=":
        return 1 if lhs >= rhs else 0
    raise EvalError(f"unknown operator {op!r}", pos)
