"""Preservation checking between the interleaved model and its refinement.

Three pillars: per-process stutter equivalence (collapsing the refined
automaton's micro-step chains must give back the source automaton),
scheduled-composition inclusion (a deterministic scheduler only ever
takes transitions the asynchronous system offers), and the
replace-one-process validation loop (swap a process for its collapsed
refined automaton, executing each macro-step atomically, and re-check
the properties).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from . import nodes as n
from .checker import (
    AsyncSystem,
    CheckResult,
    DEFAULT_STATE_LIMIT,
    Property,
    check_deadlock,
    check_invariant,
    check_response,
)
from .diagnostics import ConfigError
from .refine import RefinedAutomaton, collapse_refined, refined_automaton
from .semantics import (
    GlobalState,
    ProcessAutomaton,
    Transition,
    compile_model,
    digest,
)


# ---------------------------------------------------------------------------
# stutter equivalence


@dataclass
class EquivalenceVerdict:
    ok: bool
    detail: str = ""
    witness: Optional[tuple[int, int]] = None  # (source loc, refined loc)


def check_stutter_equivalence(d: ProcessAutomaton,
                              dprime: RefinedAutomaton) -> EquivalenceVerdict:
    """Collapse micro-step chains in dprime and compare with d."""
    cm = dprime.collapse_map
    missing = [loc for loc in dprime.locations if loc not in cm]
    if missing:
        return EquivalenceVerdict(False, f"unmapped refined locations {missing}")
    if set(cm.values()) != set(d.locations):
        return EquivalenceVerdict(
            False, "collapse map is not surjective onto the source locations"
        )
    collapsed = collapse_refined(dprime)
    if collapsed.s0 != d.s0:
        return EquivalenceVerdict(
            False, "initial locations differ", (d.s0, collapsed.s0)
        )
    src_sig = {
        loc: sorted((e.label(), e.dst) for e in d.outgoing[loc])
        for loc in d.locations
    }
    col_sig = {
        loc: sorted((e.label(), e.dst) for e in collapsed.outgoing.get(loc, ()))
        for loc in collapsed.locations
    }
    for loc in sorted(d.locations):
        if src_sig.get(loc) != col_sig.get(loc):
            return EquivalenceVerdict(
                False,
                f"transitions from location {loc} differ after collapsing",
                (loc, loc),
            )
    if frozenset(collapsed.finals) != frozenset(d.finals):
        return EquivalenceVerdict(False, "final locations differ")
    return EquivalenceVerdict(True, "isomorphic after collapsing micro-steps")


# ---------------------------------------------------------------------------
# schedulers


@dataclass(frozen=True)
class Scheduler:
    policy: str  # 'fifo' | 'round_robin'
    quantum: int = 1

    def __post_init__(self):
        if self.policy not in ("fifo", "round_robin"):
            raise ConfigError(f"unknown scheduling policy {self.policy!r}")
        if self.quantum < 1:
            raise ConfigError("quantum must be >= 1")


@dataclass(frozen=True)
class SchedTransition:
    base: Transition
    source: object
    target: object

    @property
    def pid(self) -> int:
        return self.base.pid

    @property
    def proc_name(self) -> str:
        return self.base.proc_name

    @property
    def edges(self):
        return self.base.edges

    @property
    def label(self) -> str:
        return self.base.label


class SchedSystem:
    """The composed system restricted to one scheduler's choices.

    fifo runs the lowest-indexed runnable process until it blocks
    (strict priority); round_robin rotates ownership every `quantum`
    transitions, so its search states carry (owner, used).
    """

    def __init__(self, model: n.Model, sched: Scheduler, em=None):
        self.em = em if em is not None else compile_model(model)
        self.sched = sched

    def initial_state(self):
        g = self.em.initial_state()
        if self.sched.policy == "fifo":
            return g
        return (g, 0, 0)

    def global_state(self, state) -> GlobalState:
        if self.sched.policy == "fifo":
            return state
        return state[0]

    def successors(self, state):
        if self.sched.policy == "fifo":
            for pid in range(len(self.em.instances)):
                mine = self.em.transitions_of(state, pid)
                if mine:
                    return [SchedTransition(t, state, t.target) for t in mine]
            return []
        g, owner, used = state
        nproc = len(self.em.instances)
        for k in range(nproc):
            pid = (owner + k) % nproc
            mine = self.em.transitions_of(g, pid)
            if not mine:
                continue
            if k > 0:
                # the owner was blocked: ownership skips forward
                used = 0
            out = []
            for t in mine:
                nused = used + 1
                nowner = pid
                if nused >= self.sched.quantum:
                    nowner, nused = (pid + 1) % nproc, 0
                out.append(SchedTransition(t, state, (t.target, nowner, nused)))
            return out
        return []

    def num_processes(self) -> int:
        return len(self.em.instances)

    def enabled_mask(self, state) -> int:
        mask = 0
        for t in self.successors(state):
            mask |= 1 << t.pid
        return mask

    def invalid_end(self, state) -> bool:
        g = self.global_state(state)
        return any(
            not self.em.at_final(g, pid)
            for pid in range(len(self.em.instances))
        )

    def digest(self, state) -> bytes:
        if self.sched.policy == "fifo":
            return digest(state)
        g, owner, used = state
        return digest(g) + bytes([owner & 0xFF, used & 0xFF])

    def eval_pred(self, state, expr) -> bool:
        from .checker import _eval_global

        return _eval_global(self.em, self.global_state(state), expr) != 0


def scheduled_successors(model: n.Model, state: GlobalState, sched: Scheduler,
                         owner: int = 0, used: int = 0) -> list[Transition]:
    """The scheduler's choice at `state`; always a subset of successors."""
    system = SchedSystem(model, sched)
    ext = state if sched.policy == "fifo" else (state, owner, used)
    return [t.base for t in system.successors(ext)]


def scheduled_subset_check(model: n.Model, sched: Scheduler,
                           cap: int = 200_000):
    """Exhaustively check scheduled(s) is a subset of successors(s).

    Returns (witnesses, states_checked); witnesses describe scheduled
    transitions the asynchronous system does not offer (must be empty).
    """
    em = compile_model(model)
    system = SchedSystem(model, sched, em)
    init = system.initial_state()
    seen = {system.digest(init)}
    frontier = [init]
    witnesses: list[str] = []
    checked = 0
    while frontier:
        state = frontier.pop()
        checked += 1
        g = system.global_state(state)
        async_keys = {
            (t.pid, tuple(e.eid for e in t.edges), digest(t.target))
            for t in em.successors(g)
        }
        for t in system.successors(state):
            key = (t.pid, tuple(e.eid for e in t.edges), digest(t.base.target))
            if key not in async_keys:
                witnesses.append(
                    f"proc={t.proc_name} stmt={t.label} at state {digest(g).hex()}"
                )
                continue
            td = system.digest(t.target)
            if td not in seen:
                if len(seen) >= cap:
                    return witnesses, checked
                seen.add(td)
                frontier.append(t.target)
    return witnesses, checked


# ---------------------------------------------------------------------------
# reports


@dataclass
class PropertyRow:
    name: str
    baseline: str
    rechecked: str
    is_safety: bool

    @property
    def preserved(self) -> bool:
        if self.baseline != "pass":
            return True  # nothing to preserve
        return self.rechecked == "pass"


@dataclass
class ConformanceReport:
    title: str
    process_equivalence: dict[str, EquivalenceVerdict] = field(default_factory=dict)
    inclusion_ok: Optional[bool] = None
    inclusion_states: int = 0
    rows: list[PropertyRow] = field(default_factory=list)
    witnesses: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        if any(not v.ok for v in self.process_equivalence.values()):
            return False
        if self.inclusion_ok is False:
            return False
        if self.witnesses:
            return False
        return all(r.preserved for r in self.rows if r.is_safety)

    def render(self) -> str:
        lines = [f"conformance report: {self.title}"]
        for name, v in sorted(self.process_equivalence.items()):
            mark = "PASS" if v.ok else "FAIL"
            lines.append(f"{mark} equivalence {name}: {v.detail}")
        if self.inclusion_ok is not None:
            mark = "PASS" if self.inclusion_ok else "FAIL"
            lines.append(
                f"{mark} scheduled-subset inclusion over {self.inclusion_states} states"
            )
        for w in self.witnesses:
            lines.append(f"WITNESS {w}")
        for r in self.rows:
            if r.is_safety:
                mark = "PASS" if r.preserved else "FAIL"
                lines.append(
                    f"{mark} property {r.name}: baseline={r.baseline} rechecked={r.rechecked}"
                )
            else:
                lines.append(
                    f"INFO property {r.name}: baseline={r.baseline} rechecked={r.rechecked}"
                    " (response properties are reported, not claimed preserved)"
                )
        lines.append("RESULT " + ("PASS" if self.ok else "FAIL"))
        return "\n".join(lines)


def _check(model, prop: Property, limit: int, system=None) -> CheckResult:
    if prop.pattern == "deadlock":
        return check_deadlock(model, limit, system=system)
    if prop.pattern == "response":
        return check_response(model, prop, limit, system=system)
    return check_invariant(model, prop, limit, system=system)


def check_preservation(model: n.Model, props: list[Property], sched: Scheduler,
                       limit: int = DEFAULT_STATE_LIMIT,
                       subset_cap: int = 200_000) -> ConformanceReport:
    """Re-run properties on the scheduled system; safety must carry over."""
    report = ConformanceReport(title=f"preservation under {sched.policy}")
    witnesses, states = scheduled_subset_check(model, sched, subset_cap)
    report.witnesses = witnesses
    report.inclusion_ok = not witnesses
    report.inclusion_states = states
    for prop in props:
        base = _check(model, prop, limit)
        scheduled = _check(model, prop, limit, system=_sched_system(model, sched))
        report.rows.append(
            PropertyRow(prop.name, base.verdict, scheduled.verdict, prop.is_safety)
        )
    return report


def _sched_system(model, sched: Scheduler, em=None) -> SchedSystem:
    return SchedSystem(model, sched, em)


def conform(model: n.Model, props: list[Property], sched: Scheduler,
            limit: int = DEFAULT_STATE_LIMIT,
            subset_cap: int = 200_000) -> ConformanceReport:
    """Full report: equivalence per process, inclusion, property re-checks."""
    report = check_preservation(model, props, sched, limit, subset_cap)
    report.title = f"refinement conformance under {sched.policy}"
    for proc in model.proctypes:
        from .semantics import build_automaton

        d = build_automaton(proc, model)
        dp = refined_automaton(proc, model)
        report.process_equivalence[proc.name] = check_stutter_equivalence(d, dp)
    return report


# ---------------------------------------------------------------------------
# replace-one-process validation


def _with_automaton(model: n.Model, proc_name: str, auto: ProcessAutomaton):
    em = compile_model(model)
    em2 = copy.copy(em)
    em2.automata = dict(em.automata)
    em2.automata[proc_name] = auto
    return em2


def validate_replacement(model: n.Model, proc_name: str,
                         dprime: RefinedAutomaton, props: list[Property],
                         limit: int = DEFAULT_STATE_LIMIT) -> ConformanceReport:
    """Swap one process for its refined automaton and re-check properties.

    Each collapsed chain of dprime executes as one atomic macro-step, so
    the composition runs the generated function's semantics against the
    untouched source processes.
    """
    if proc_name not in {p.name for p in model.proctypes}:
        raise ConfigError(f"unknown proctype {proc_name!r}")
    report = ConformanceReport(title=f"replacement of {proc_name}")
    from .semantics import build_automaton

    d = build_automaton(model.proctype(proc_name), model)
    verdict = check_stutter_equivalence(d, dprime)
    report.process_equivalence[proc_name] = verdict
    collapsed = collapse_refined(dprime)
    em2 = _with_automaton(model, proc_name, collapsed)

    class _HybridSystem(AsyncSystem):
        def __init__(self):
            self.em = em2

    for prop in props:
        base = _check(model, prop, limit)
        replaced = _check(model, prop, limit, system=_HybridSystem())
        report.rows.append(
            PropertyRow(prop.name, base.verdict, replaced.verdict, prop.is_safety)
        )
    return report


# ---------------------------------------------------------------------------
# trace acceptance for compiled runs


@dataclass
class TraceVerdict:
    ok: bool
    steps: int
    detail: str = ""


def trace_accept(model: n.Model, trace_text: str) -> TraceVerdict:
    """Replay a `pid edge` trace emitted by a generated program.

    Every line must name an edge that leaves the process's current
    location and is executable in the current composed state; the edge
    is then applied.  This is exactly acceptance by the model's
    composed automaton at statement granularity.
    """
    em = compile_model(model)
    state = em.initial_state()
    steps = 0
    for lineno, line in enumerate(trace_text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            pid_s, eid_s = line.split()
            pid, eid = int(pid_s), int(eid_s)
        except ValueError:
            return TraceVerdict(False, steps, f"line {lineno}: malformed {line!r}")
        if not 0 <= pid < len(em.instances):
            return TraceVerdict(False, steps, f"line {lineno}: bad pid {pid}")
        auto = em.automaton_of(pid)
        if not 0 <= eid < len(auto.edges):
            return TraceVerdict(False, steps, f"line {lineno}: bad edge {eid}")
        edge = auto.edges[eid]
        if edge.src != state.locs[pid]:
            return TraceVerdict(
                False, steps,
                f"line {lineno}: proc {em.instance_names[pid]} is at "
                f"{state.locs[pid]}, edge {eid} leaves {edge.src}",
            )
        if not em.executable_edge(state, pid, edge):
            return TraceVerdict(
                False, steps,
                f"line {lineno}: edge {eid} ({edge.label()}) not executable",
            )
        state = em.apply_edge(state, pid, edge)
        steps += 1
    return TraceVerdict(True, steps, "every step is a legal transition")
