"""Property checking over the composed transition system.

Safety (deadlock freedom, invariants) uses breadth-first search, so
counterexamples are shortest prefixes.  Response properties G(p -> F q)
use nested depth-first search over a product with a latch/reset
obligation monitor and the copies construction for weak process
fairness.  The engine is generic over the successor oracle so the
conformance module can re-check properties on scheduled systems.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import nodes as n
from .diagnostics import EvalError, StateLimitExceeded
from .semantics import ExecModel, GlobalState, compile_model, digest

DEFAULT_STATE_LIMIT = 5_000_000


# ---------------------------------------------------------------------------
# properties


@dataclass(frozen=True)
class Property:
    """A checkable property over global variables.

    pattern is one of 'deadlock', 'invariant' (G pred),
    'conditional' (G (p -> q)) or 'response' (G (p -> F q)).
    """

    name: str
    pattern: str
    pred: Optional[n.Expr] = None
    p: Optional[n.Expr] = None
    q: Optional[n.Expr] = None

    @staticmethod
    def deadlock(name: str = "deadlock") -> "Property":
        return Property(name, "deadlock")

    @staticmethod
    def invariant(name: str, pred: n.Expr) -> "Property":
        return Property(name, "invariant", pred=pred)

    @staticmethod
    def conditional(name: str, p: n.Expr, q: n.Expr) -> "Property":
        return Property(name, "conditional", p=p, q=q)

    @staticmethod
    def response(name: str, p: n.Expr, q: n.Expr) -> "Property":
        return Property(name, "response", p=p, q=q)

    def atoms(self):
        for e in (self.pred, self.p, self.q):
            if e is not None:
                yield e

    @property
    def is_safety(self) -> bool:
        return self.pattern in ("deadlock", "invariant", "conditional")


def check_atoms_resolve(model: n.Model, prop: Property) -> None:
    """Property atoms may reference only declared global variables."""
    em = compile_model(model)
    known = set(em.global_index) | set(em.mtype_values)
    for top in prop.atoms():
        stack = [top]
        while stack:
            e = stack.pop()
            if isinstance(e, n.Name) and e.ident not in known:
                raise EvalError(f"property references unknown global {e.ident!r}", e.pos)
            if isinstance(e, (n.Index, n.FieldRef)) and e.ident not in known:
                if isinstance(e, n.FieldRef) and f"{e.ident}.{e.fieldname}" in known:
                    pass
                else:
                    raise EvalError(
                        f"property references unknown global {e.ident!r}", e.pos
                    )
            if isinstance(e, n.Unary):
                stack.append(e.operand)
            elif isinstance(e, n.Binary):
                stack.extend((e.left, e.right))
            elif isinstance(e, n.Index):
                stack.append(e.index)


# ---------------------------------------------------------------------------
# results


@dataclass
class Stats:
    states: int = 0
    transitions: int = 0
    max_depth: int = 0
    truncated: bool = False


@dataclass
class CounterExample:
    trace: list  # list of Transition-like steps from the initial state
    violation_kind: str  # 'safety-prefix' | 'lasso'
    cycle_start: int = 0  # lasso only: index where the cycle begins


@dataclass
class CheckResult:
    prop_name: str
    verdict: str  # 'pass' | 'fail' | 'not_applicable'
    counterexample: Optional[CounterExample] = None
    stats: Stats = field(default_factory=Stats)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


# ---------------------------------------------------------------------------
# generic system protocol


class AsyncSystem:
    """Asynchronous interleaving of all process instances (the default)."""

    def __init__(self, model: n.Model):
        self.em = compile_model(model)

    def initial_state(self):
        return self.em.initial_state()

    def successors(self, state):
        return self.em.successors(state)

    def num_processes(self) -> int:
        return len(self.em.instances)

    def enabled_mask(self, state) -> int:
        mask = 0
        for pid in range(len(self.em.instances)):
            if self.em.transitions_of(state, pid):
                mask |= 1 << pid
        return mask

    def invalid_end(self, state) -> bool:
        return any(
            not self.em.at_final(state, pid)
            for pid in range(len(self.em.instances))
        )

    def global_state(self, state) -> GlobalState:
        return state

    def digest(self, state) -> bytes:
        return digest(state)

    def eval_pred(self, state, expr: n.Expr) -> bool:
        return _eval_global(self.em, self.global_state(state), expr) != 0


def _eval_global(em: ExecModel, state: GlobalState, e: n.Expr) -> int:
    """Evaluate a property atom; names resolve against globals only."""
    if isinstance(e, n.Num):
        return e.value
    if isinstance(e, n.Name):
        gi = em.global_index.get(e.ident)
        if gi is not None:
            v = state.globals[gi]
            if isinstance(v, tuple):
                raise EvalError(f"array {e.ident!r} used without index", e.pos)
            return v
        if e.ident in em.mtype_values:
            return em.mtype_values[e.ident]
        raise EvalError(f"unknown global {e.ident!r}", e.pos)
    if isinstance(e, n.Index):
        gi = em.global_index.get(e.ident)
        if gi is None:
            raise EvalError(f"unknown global {e.ident!r}", e.pos)
        arr = state.globals[gi]
        idx = _eval_global(em, state, e.index)
        if not isinstance(arr, tuple) or not 0 <= idx < len(arr):
            raise EvalError(f"bad index for {e.ident!r}", e.pos)
        return arr[idx]
    if isinstance(e, n.FieldRef):
        gi = em.global_index.get(f"{e.ident}.{e.fieldname}")
        if gi is None:
            raise EvalError(f"unknown global {e.ident}.{e.fieldname}", e.pos)
        return state.globals[gi]
    if isinstance(e, n.Unary):
        v = _eval_global(em, state, e.operand)
        return -v if e.op == "-" else (0 if v else 1)
    if isinstance(e, n.Binary):
        if e.op == "&&":
            return 1 if _eval_global(em, state, e.left) and _eval_global(em, state, e.right) else 0
        if e.op == "||":
            return 1 if _eval_global(em, state, e.left) or _eval_global(em, state, e.right) else 0
        from .semantics import _apply_binop

        return _apply_binop(
            e.op, _eval_global(em, state, e.left), _eval_global(em, state, e.right), e.pos
        )
    raise EvalError("cannot evaluate property atom", (0, 0))


# ---------------------------------------------------------------------------
# safety search (BFS, shortest counterexamples)


def _bfs_search(system, violation: Callable, limit: int) -> tuple[Optional[list], Stats]:
    """Return (trace or None, stats); trace is a list of transition steps."""
    stats = Stats()
    init = system.initial_state()
    d0 = system.digest(init)
    parents: dict[bytes, Optional[tuple[bytes, int, tuple[int, ...]]]] = {d0: None}
    queue = deque([(init, d0, 0)])
    stats.states = 1
    while queue:
        state, dg, depth = queue.popleft()
        stats.max_depth = max(stats.max_depth, depth)
        succs = system.successors(state)
        stats.transitions += len(succs)
        if violation(state, succs):
            return _rebuild_trace(system, parents, dg), stats
        for t in succs:
            td = system.digest(t.target)
            if td not in parents:
                if stats.states >= limit:
                    stats.truncated = True
                    raise StateLimitExceeded(limit, stats.states)
                parents[td] = (dg, t.pid, tuple(e.eid for e in t.edges))
                stats.states += 1
                queue.append((t.target, td, depth + 1))
    return None, stats


def _rebuild_trace(system, parents, final_digest: bytes) -> list:
    # walk back to the root, then re-execute forward to recover transitions
    keys: list[tuple[int, tuple[int, ...]]] = []
    dg = final_digest
    while parents[dg] is not None:
        parent_dg, pid, eids = parents[dg]
        keys.append((pid, eids))
        dg = parent_dg
    keys.reverse()
    state = system.initial_state()
    trace = []
    for pid, eids in keys:
        step = None
        for t in system.successors(state):
            if t.pid == pid and tuple(e.eid for e in t.edges) == eids:
                step = t
                break
        if step is None:
            raise AssertionError("trace reconstruction failed")
        trace.append(step)
        state = step.target
    return trace


def check_deadlock(model: n.Model, limit: int = DEFAULT_STATE_LIMIT,
                   system=None) -> CheckResult:
    """Fail iff a reachable state has no successors while some process
    is not at a final location (an invalid end state)."""
    system = system or AsyncSystem(model)

    def violation(state, succs):
        return not succs and system.invalid_end(state)

    trace, stats = _bfs_search(system, violation, limit)
    if trace is None:
        return CheckResult("deadlock", "pass", stats=stats)
    return CheckResult(
        "deadlock", "fail", CounterExample(trace, "safety-prefix"), stats
    )


def check_invariant(model: n.Model, prop: Property,
                    limit: int = DEFAULT_STATE_LIMIT, system=None) -> CheckResult:
    if prop.pattern not in ("invariant", "conditional"):
        raise ValueError(f"{prop.name} is not an invariant property")
    check_atoms_resolve(model, prop)
    system = system or AsyncSystem(model)

    if prop.pattern == "invariant":
        def violation(state, succs):
            return not system.eval_pred(state, prop.pred)
    else:
        def violation(state, succs):
            return (
                system.eval_pred(state, prop.p)
                and not system.eval_pred(state, prop.q)
            )

    trace, stats = _bfs_search(system, violation, limit)
    if trace is None:
        return CheckResult(prop.name, "pass", stats=stats)
    return CheckResult(
        prop.name, "fail", CounterExample(trace, "safety-prefix"), stats
    )


def explore(model: n.Model, limit: int = DEFAULT_STATE_LIMIT, system=None) -> Stats:
    """Count reachable states; truncation is reported, not raised."""
    if limit <= 0:
        raise ValueError("limit must be positive")
    system = system or AsyncSystem(model)
    stats = Stats()
    init = system.initial_state()
    seen = {system.digest(init)}
    queue = deque([(init, 0)])
    stats.states = 1
    while queue:
        state, depth = queue.popleft()
        stats.max_depth = max(stats.max_depth, depth)
        for t in system.successors(state):
            stats.transitions += 1
            td = system.digest(t.target)
            if td not in seen:
                if stats.states >= limit:
                    stats.truncated = True
                    return stats
                seen.add(td)
                stats.states += 1
                queue.append((t.target, depth + 1))
    return stats


# ---------------------------------------------------------------------------
# response checking: NDFS over the fairness product


def check_response(model: n.Model, prop: Property,
                   limit: int = DEFAULT_STATE_LIMIT, system=None) -> CheckResult:
    """Fail iff a weakly-fair lasso satisfies p somewhere with q never
    true afterwards; the counterexample is stem + cycle.

    The product pairs each state with a two-state obligation monitor
    (uncommitted / committed-to-¬q; the committed state has no successor
    on q, so any cycle through it is q-free by construction) and a
    fairness counter implementing the copies construction for weak
    process fairness.  Accepting cycles are found by nested DFS with
    red marks persisting across failed inner searches.
    """
    if prop.pattern != "response":
        raise ValueError(f"{prop.name} is not a response property")
    check_atoms_resolve(model, prop)
    system = system or AsyncSystem(model)
    nprocs = system.num_processes()
    stats = Stats()

    init = system.initial_state()
    d0 = system.digest(init)

    # caches keyed by state digest
    succ_cache: dict[bytes, list] = {}
    enabled_cache: dict[bytes, int] = {}
    pq_cache: dict[bytes, tuple[bool, bool]] = {}
    state_by_digest = {d0: init}

    def pq_of(dg: bytes) -> tuple[bool, bool]:
        if dg not in pq_cache:
            state = state_by_digest[dg]
            pq_cache[dg] = (
                system.eval_pred(state, prop.p),
                system.eval_pred(state, prop.q),
            )
        return pq_cache[dg]

    def successors_of(dg: bytes):
        if dg not in succ_cache:
            state = state_by_digest[dg]
            succs = system.successors(state)
            succ_cache[dg] = succs
            mask = 0
            for t in succs:
                mask |= 1 << t.pid
                state_by_digest.setdefault(system.digest(t.target), t.target)
            enabled_cache[dg] = mask
        return succ_cache[dg]

    def advance_copy(copy: int, src_dg: bytes, pid: int) -> int:
        x = 0 if copy == nprocs else copy
        mask = enabled_cache[src_dg]
        while x < nprocs and (pid == x or not (mask >> x) & 1):
            x += 1
        return x

    def product_succs(node):
        dg, m, copy = node
        out = []
        for t in successors_of(dg):
            td = system.digest(t.target)
            p2, q2 = pq_of(td)
            c2 = advance_copy(copy, dg, t.pid)
            if m == 0:
                out.append(((td, 0, c2), t))
                if p2 and not q2:
                    out.append(((td, 1, c2), t))
            elif not q2:
                out.append(((td, 1, c2), t))
        return out

    def is_accepting(node) -> bool:
        return node[1] == 1 and node[2] == nprocs

    p0, q0 = pq_of(d0)
    roots = [(d0, 0, 0)]
    if p0 and not q0:
        roots.append((d0, 1, 0))

    blue: set = set()
    red: set = set()
    stats.states = 0

    def red_search(seed):
        frames = [(seed, iter(product_succs(seed)), None)]
        local_red = set()
        while frames:
            node, it, _arr = frames[-1]
            child = None
            for nxt, t in it:
                if nxt == seed:
                    return [f[2] for f in frames[1:]] + [t]
                if nxt in red or nxt in local_red:
                    continue
                child = (nxt, t)
                break
            if child is None:
                frames.pop()
                continue
            nxt, t = child
            local_red.add(nxt)
            frames.append((nxt, iter(product_succs(nxt)), t))
        red.update(local_red)
        return None

    for root in roots:
        if root in blue:
            continue
        blue.add(root)
        stats.states += 1
        stack = [(root, iter(product_succs(root)), None)]
        while stack:
            node, it, _arr = stack[-1]
            child = None
            for nxt, t in it:
                if nxt not in blue:
                    child = (nxt, t)
                    break
            if child is not None:
                nxt, t = child
                if len(blue) >= limit:
                    raise StateLimitExceeded(limit, len(blue))
                blue.add(nxt)
                stats.states += 1
                stack.append((nxt, iter(product_succs(nxt)), t))
                continue
            stack.pop()
            if is_accepting(node):
                cycle = red_search(node)
                if cycle is not None:
                    stem = [f[2] for f in stack[1:]]
                    if _arr is not None:
                        stem.append(_arr)
                    ce = CounterExample(stem + cycle, "lasso", cycle_start=len(stem))
                    stats.transitions = sum(len(v) for v in succ_cache.values())
                    return CheckResult(prop.name, "fail", ce, stats)

    stats.transitions = sum(len(v) for v in succ_cache.values())
    return CheckResult(prop.name, "pass", stats=stats)


# ---------------------------------------------------------------------------
# trace serialization


def changed_vars(em: ExecModel, before: GlobalState, after: GlobalState) -> str:
    parts = []
    for i, slot in enumerate(em.global_slots):
        if before.globals[i] != after.globals[i]:
            parts.append(f"{slot.name}={_fmt(after.globals[i])}")
    for ci, chan in enumerate(em.chans):
        if before.chans[ci] != after.chans[ci]:
            content = ",".join(
                "(" + ",".join(str(v) for v in msg) + ")" for msg in after.chans[ci]
            )
            parts.append(f"{chan.name}=[{content}]")
    return " ".join(parts) if parts else "-"


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return "{" + ",".join(str(x) for x in v) + "}"
    return str(v)


def render_trace(model: n.Model, ce: CounterExample) -> str:
    """One line per step: `step k: proc=<name> stmt=<label> | <changed vars>`."""
    em = compile_model(model)
    lines = []
    for k, t in enumerate(ce.trace):
        base = getattr(t, "base", t)
        delta = changed_vars(em, base.source, base.target)
        mark = ""
        if ce.violation_kind == "lasso" and k == ce.cycle_start:
            mark = " [cycle start]"
        lines.append(
            f"step {k}: proc={base.proc_name} stmt={base.label} | {delta}{mark}"
        )
    return "\n".join(lines)


def replay(model: n.Model, ce: CounterExample, system=None) -> bool:
    """Check the trace replays through the successor oracle step by step."""
    system = system or AsyncSystem(model)
    state = system.initial_state()
    for t in ce.trace:
        match = None
        for cand in system.successors(state):
            if cand.pid == t.pid and tuple(e.eid for e in cand.edges) == tuple(
                e.eid for e in t.edges
            ):
                match = cand
                break
        if match is None:
            return False
        state = match.target
    if ce.violation_kind == "lasso":
        # the cycle must close back on the state where it started
        state_at = system.initial_state()
        for t in ce.trace[: ce.cycle_start]:
            state_at = _step(system, state_at, t)
        start = system.digest(state_at)
        for t in ce.trace[ce.cycle_start:]:
            state_at = _step(system, state_at, t)
        return system.digest(state_at) == start
    return True


def _step(system, state, t):
    for cand in system.successors(state):
        if cand.pid == t.pid and tuple(e.eid for e in cand.edges) == tuple(
            e.eid for e in t.edges
        ):
            return cand.target
    raise AssertionError("trace step not reproducible")
