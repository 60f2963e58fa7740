"""Acceptance suite: one test per criterion, one report line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import dataclasses
import os
import shutil
import subprocess

import pytest

from pmlcheck import nodes as n
from pmlcheck.checker import AsyncSystem, Property, check_deadlock, check_invariant, explore, replay
from pmlcheck.conformance import (
    Scheduler,
    check_preservation,
    check_stutter_equivalence,
    scheduled_subset_check,
    trace_accept,
    validate_replacement,
)
from pmlcheck.frontend import parse_expr
from pmlcheck.pacemaker import (
    BASE_MODES,
    CONDITIONS,
    HeartBehavior,
    Mode,
    PacemakerConfig,
    build_model,
    default_params,
    derive_modes,
    derive_modes_nondet,
    indicated_heart,
    property_suite,
    render_matrix,
    verification_matrix,
)
from pmlcheck.refine import RULE_NAMES, generate_program, refined_automaton
from pmlcheck.semantics import build_automaton, compile_model

from corpus import all_constructs_model, corpus_with_properties
from modelgen import random_invariant_expr, random_model
from oracles import naive_deadlocks, naive_invariant_holds, naive_reachable

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RUNTIME_DIR = os.path.join(REPO_ROOT, "runtime")

SCHEDULERS = (Scheduler("fifo"), Scheduler("round_robin", 1))


def report(name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {name}: {status} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


# -- criterion: mode x property verification matrix --------------------------

EXPECTED_APPLICABLE = {
    "deadlock": set(BASE_MODES),
    "pace_limit": set(BASE_MODES),
    "av_delay": {"DOO", "DDI", "VDD", "DDD"},
    "refractory": set(BASE_MODES),
    "inhibiting": {"VVI", "AAI", "DDI"},
    "triggering": {"VVT", "AAT"},
    "tracking": {"VDD", "DDD"},
}


def test_verification_matrix():
    matrix = verification_matrix()  # default params, indicated hearts
    problems = []
    for mode, rows in matrix.items():
        for row, verdict in rows.items():
            applicable = mode in EXPECTED_APPLICABLE[row]
            if applicable and verdict != "pass":
                problems.append(f"{mode}/{row}={verdict}")
            if not applicable and verdict != "not_applicable":
                problems.append(f"{mode}/{row} should be blank, got {verdict}")
    print()
    print(render_matrix(matrix))
    report("verification-matrix", not problems, "; ".join(problems))


# -- criterion: consistent operating modes per heart condition ----------------


def test_consistent_mode_derivation():
    expected = {
        "missA": {"AOO", "AAI", "AAT"},
        "missV": {"VOO", "VVI", "VVT"},
        "dead": {"DOO", "DDI", "VDD", "DDD"},
    }
    problems = []
    for cond in CONDITIONS:
        swept = {m.code for m in derive_modes(cond)}
        nondet = {m.code for m in derive_modes_nondet(cond)}
        if swept != expected[cond]:
            problems.append(f"{cond}: sweep gave {sorted(swept)}")
        if nondet != swept:
            problems.append(f"{cond}: nondeterministic encoding gave {sorted(nondet)}")
    report("consistent-modes", not problems, "; ".join(problems))


# -- criterion: refinement preservation ---------------------------------------


def test_refinement_preservation():
    problems = []
    for name, model, props in corpus_with_properties():
        # (a) stutter equivalence for every process
        for proc in model.proctypes:
            d = build_automaton(proc, model)
            dp = refined_automaton(proc, model)
            v = check_stutter_equivalence(d, dp)
            if not v.ok:
                problems.append(f"{name}/{proc.name}: equivalence {v.detail}")
        # (b) scheduled subset law, exhaustively, 200k cap, both policies
        for sched in SCHEDULERS:
            witnesses, _states = scheduled_subset_check(model, sched, cap=200_000)
            if witnesses:
                problems.append(f"{name}/{sched.policy}: {len(witnesses)} witnesses")
        # (c) safety properties that pass asynchronously pass when scheduled
        for sched in SCHEDULERS:
            rep = check_preservation(model, props, sched, subset_cap=1)
            for row in rep.rows:
                if row.is_safety and row.baseline == "pass" and row.rechecked != "pass":
                    problems.append(f"{name}/{sched.policy}/{row.name} not preserved")
    report("refinement-preservation-abc", not problems, "; ".join(problems[:4]))


def test_replacement_reproduces_baseline_all_modes():
    problems = []
    params = default_params()
    for code in BASE_MODES:
        mode = Mode.parse(code)
        config = PacemakerConfig(mode, params, indicated_heart(mode))
        model = build_model(config)
        props = property_suite(config)
        for proc in model.proctypes:
            dp = refined_automaton(proc, model)
            rep = validate_replacement(model, proc.name, dp, props)
            if not rep.ok:
                problems.append(f"{code}/{proc.name}: report failed")
            for row in rep.rows:
                if row.baseline != row.rechecked:
                    problems.append(
                        f"{code}/{proc.name}/{row.name}: {row.baseline}->{row.rechecked}"
                    )
    report("refinement-preservation-d", not problems, "; ".join(problems[:4]))


# -- criterion: checker oracle equivalence ------------------------------------


def test_checker_oracle_equivalence():
    checked = 0
    problems = []
    seed = 0
    while checked < 20 and seed < 60:
        seed += 1
        model = random_model(seed)
        try:
            states = naive_reachable(model, limit=50_000)
        except RuntimeError:
            continue
        if len(states) > 50_000:
            continue
        checked += 1
        em = compile_model(model)
        # deadlock verdicts
        naive_dead = bool(naive_deadlocks(model))
        result = check_deadlock(model)
        if (result.verdict == "fail") != naive_dead:
            problems.append(f"seed {seed}: deadlock mismatch")
        if result.verdict == "fail" and not replay(model, result.counterexample):
            problems.append(f"seed {seed}: deadlock trace does not replay")
        # invariant verdicts
        expr = parse_expr(random_invariant_expr(seed, model))
        sysm = AsyncSystem(model)
        ok = naive_invariant_holds(model, lambda _em, s: sysm.eval_pred(s, expr))
        res = check_invariant(model, Property.invariant("rand", expr))
        if (res.verdict == "pass") != ok:
            problems.append(f"seed {seed}: invariant mismatch")
        if res.verdict == "fail" and not replay(model, res.counterexample):
            problems.append(f"seed {seed}: invariant trace does not replay")
    report(
        "checker-oracle-equivalence",
        checked >= 20 and not problems,
        f"checked {checked} models; " + "; ".join(problems[:4]),
    )


# -- criterion: rule coverage --------------------------------------------------


def test_rule_coverage_and_determinism():
    model = all_constructs_model()
    unit = generate_program(model, name="allc")
    missing = [r for r in RULE_NAMES if unit.coverage.get(r, 0) == 0]
    again = generate_program(all_constructs_model(), name="allc")
    deterministic = unit.text.encode() == again.text.encode()
    report(
        "rule-coverage",
        not missing and deterministic,
        f"missing={missing} deterministic={deterministic}",
    )


# -- criterion: exploration statistics ----------------------------------------


def _single_process_submodel(model: n.Model, proc: n.ProcDef) -> n.Model:
    return dataclasses.replace(model, proctypes=(proc,), init_block=())


def test_exploration_statistics():
    config = PacemakerConfig(
        Mode.parse("VVI"), default_params(), HeartBehavior("miss_ventricle")
    )
    model = build_model(config)
    full_a = explore(model, limit=500_000)
    full_b = explore(model, limit=500_000)
    stable = (full_a.states, full_a.transitions) == (full_b.states, full_b.transitions)
    exceeds = True
    details = [f"full={full_a.states}"]
    for proc in model.proctypes:
        sub = _single_process_submodel(model, proc)
        sub_stats = explore(sub, limit=500_000)
        details.append(f"{proc.name}={sub_stats.states}")
        if not full_a.states > sub_stats.states:
            exceeds = False
    report(
        "exploration-statistics",
        stable and exceeds and not full_a.truncated,
        " ".join(details),
    )


# -- criterion (secondary): compile-and-run conformance ------------------------


@pytest.mark.skipif(shutil.which("gcc") is None, reason="no C compiler")
def test_compile_and_run_conformance(tmp_path):
    config = PacemakerConfig(
        Mode.parse("VVI"), default_params(), HeartBehavior("miss_ventricle")
    )
    model = build_model(config)
    unit = generate_program(model, name="vvi", trace=True, strict=True)
    src = tmp_path / "vvi_gen.c"
    src.write_text(unit.text)
    for fname in ("runtime.c", "runtime.h"):
        shutil.copy(os.path.join(RUNTIME_DIR, fname), tmp_path / fname)
    exe = tmp_path / "vvi"
    compile_cmd = [
        "gcc", "-std=c99", "-fwrapv", "-Wall", "-Wno-unused-value",
        "-O1", "-pthread", "-o", str(exe), str(src), str(tmp_path / "runtime.c"),
    ]
    built = subprocess.run(compile_cmd, capture_output=True, text=True)
    if built.returncode != 0:
        report("compile-and-run", False, built.stderr[:300])
    trace_path = tmp_path / "trace.txt"
    env = dict(os.environ)
    env.update(
        REFINE_SEED="1", RT_TRACE=str(trace_path), RT_MAX_STEPS="3000"
    )
    run = subprocess.run([str(exe)], env=env, capture_output=True, timeout=120)
    if run.returncode != 0:
        report("compile-and-run", False, f"run exit {run.returncode}")
    verdict = trace_accept(model, trace_path.read_text())
    report(
        "compile-and-run",
        verdict.ok and verdict.steps >= 3000,
        f"{verdict.steps} steps: {verdict.detail}",
    )


@pytest.mark.skipif(shutil.which("gcc") is None, reason="no C compiler")
def test_channel_fifo_under_sanitizers(tmp_path):
    exe = tmp_path / "test_runtime"
    cmd = [
        "gcc", "-std=c99", "-Wall", "-Wextra", "-fwrapv", "-O1",
        "-fsanitize=address,undefined", "-fno-omit-frame-pointer", "-pthread",
        "-o", str(exe),
        os.path.join(RUNTIME_DIR, "runtime.c"),
        os.path.join(RUNTIME_DIR, "test_runtime.c"),
        "-I", RUNTIME_DIR,
    ]
    built = subprocess.run(cmd, capture_output=True, text=True)
    if built.returncode != 0:
        report("channel-fifo-sanitizers", False, built.stderr[:300])
    run = subprocess.run([str(exe)], capture_output=True, text=True, timeout=120)
    report(
        "channel-fifo-sanitizers",
        run.returncode == 0 and "all passed" in run.stdout,
        run.stdout.strip()[:120],
    )
