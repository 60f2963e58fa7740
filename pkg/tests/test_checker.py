import pytest

from pmlcheck import parse
from pmlcheck.checker import (
    AsyncSystem,
    Property,
    check_deadlock,
    check_invariant,
    check_response,
    explore,
    render_trace,
    replay,
)
from pmlcheck.diagnostics import EvalError, StateLimitExceeded
from pmlcheck.frontend import parse_expr
from pmlcheck.semantics import compile_model

from modelgen import random_invariant_expr, random_model
from oracles import naive_deadlocks, naive_invariant_holds

CROSS_WAIT = """
chan c = [1] of {byte}
chan d = [1] of {byte}
byte v; byte w;
active proctype A(){ c ? v; d ! 1 }
active proctype B(){ d ? w; c ! 1 }
"""

COUNTER_LOOP = """
byte x;
active proctype P(){
    do
    :: x < 3 -> x = x + 1
    :: x == 3 -> x = 0
    od
}
"""


def inv(name, text):
    return Property.invariant(name, parse_expr(text))


def test_cross_wait_deadlocks():
    m = parse(CROSS_WAIT)
    r = check_deadlock(m)
    assert r.verdict == "fail"
    assert r.counterexample is not None
    assert replay(m, r.counterexample)
    # BFS gives a shortest prefix: both receives block immediately
    assert len(r.counterexample.trace) == 0


def test_terminated_process_is_valid_end():
    m = parse("byte x; active proctype P(){ x = 1 }")
    assert check_deadlock(m).verdict == "pass"


def test_invariant_false_fails_at_initial_state():
    m = parse("byte x; active proctype P(){ x = 1 }")
    r = check_invariant(m, inv("never", "false"))
    assert r.verdict == "fail"
    assert r.counterexample.trace == []


def test_counter_loop_invariant():
    # brute-force oracle over the 4-state loop confirms x reaches 3
    m = parse(COUNTER_LOOP)
    em = compile_model(m)
    gi = em.global_index["x"]
    assert not naive_invariant_holds(m, lambda _em, s: s.globals[gi] <= 2)
    r = check_invariant(m, inv("xmax", "x <= 2"))
    assert r.verdict == "fail"
    final = r.counterexample.trace[-1].target
    assert final.globals[gi] == 3
    assert replay(m, r.counterexample)
    assert check_invariant(m, inv("xmax4", "x <= 3")).verdict == "pass"


def test_conditional_invariant():
    m = parse(COUNTER_LOOP)
    p = Property.conditional("cond", parse_expr("x == 3"), parse_expr("x > 2"))
    assert check_invariant(m, p).verdict == "pass"
    p2 = Property.conditional("cond2", parse_expr("x == 3"), parse_expr("x < 3"))
    assert check_invariant(m, p2).verdict == "fail"


def test_monotonicity_on_visited_valuations():
    m = parse(COUNTER_LOOP)
    # x <= 3 passes and pointwise implies x <= 4
    assert check_invariant(m, inv("a", "x <= 3")).verdict == "pass"
    assert check_invariant(m, inv("b", "x <= 4")).verdict == "pass"


def test_property_atoms_must_be_globals():
    m = parse("byte x; active proctype P(){ byte local; local = 1 }")
    with pytest.raises(EvalError):
        check_invariant(m, inv("bad", "local == 1"))


def test_response_vacuous_pass():
    m = parse(COUNTER_LOOP)
    r = check_response(m, Property.response("vac", parse_expr("x > 9"), parse_expr("x == 0")))
    assert r.verdict == "pass"


def test_response_two_state_lasso_fails():
    # p always true, q never true: the loop itself is the lasso
    m = parse("byte x; active proctype P(){ do :: x = 1 - x od }")
    r = check_response(m, Property.response("resp", parse_expr("true"), parse_expr("x == 9")))
    assert r.verdict == "fail"
    ce = r.counterexample
    assert ce.violation_kind == "lasso"
    assert replay(m, ce)
    em = compile_model(m)
    gi = em.global_index["x"]
    for t in ce.trace[ce.cycle_start:]:
        assert t.target.globals[gi] != 9


def test_response_satisfied_passes():
    m = parse(COUNTER_LOOP)
    r = check_response(m, Property.response("resp", parse_expr("x == 1"), parse_expr("x == 3")))
    assert r.verdict == "pass"


def test_weak_fairness_excludes_starved_process():
    # without fairness, A spinning forever would be a lasso with y == 0;
    # under weak fairness B must eventually set y
    m = parse(
        """
        byte y;
        active proctype A(){ do :: skip od }
        active proctype B(){ do :: y = 1 od }
        """
    )
    r = check_response(m, Property.response("fair", parse_expr("true"), parse_expr("y == 1")))
    assert r.verdict == "pass"


def test_unfair_cycle_still_found_when_real():
    m = parse(
        """
        byte y;
        active proctype A(){ do :: skip od }
        active proctype B(){ do :: y = 2 od }
        """
    )
    r = check_response(m, Property.response("never", parse_expr("true"), parse_expr("y == 1")))
    assert r.verdict == "fail"
    # fairness: every continuously-enabled process moves within the cycle
    cycle = r.counterexample.trace[r.counterexample.cycle_start:]
    moved = {t.pid for t in cycle}
    assert moved == {0, 1}


def test_explore_chain_counts():
    m = parse("byte x; active proctype P(){ x = 1; x = 2; x = 3 }")
    st = explore(m)
    assert st.states == 4
    assert not st.truncated


def test_explore_truncation_flag():
    m = parse(COUNTER_LOOP)
    st = explore(m, limit=2)
    assert st.truncated
    assert st.states == 2


def test_state_limit_exceeded_raises():
    m = parse(COUNTER_LOOP)
    with pytest.raises(StateLimitExceeded):
        check_invariant(m, inv("lim", "true"), limit=2)


def test_render_trace_format():
    m = parse(COUNTER_LOOP)
    r = check_invariant(m, inv("xmax", "x <= 1"))
    text = render_trace(m, r.counterexample)
    assert "step 0: proc=P" in text
    assert "stmt=" in text and "|" in text


@pytest.mark.parametrize("seed", range(25))
def test_response_matches_fair_lasso_oracle(seed):
    from modelgen import random_cyclic_model, random_pq
    from oracles import naive_response_holds

    m = random_cyclic_model(seed)
    p_text, q_text = random_pq(seed, m)
    p, q = parse_expr(p_text), parse_expr(q_text)
    sysm = AsyncSystem(m)
    expected = naive_response_holds(
        m,
        lambda _em, s: sysm.eval_pred(s, p),
        lambda _em, s: sysm.eval_pred(s, q),
    )
    res = check_response(m, Property.response("rand", p, q))
    assert (res.verdict == "pass") == expected, (p_text, q_text)
    if res.verdict == "fail":
        assert replay(m, res.counterexample)
        # the cycle truly avoids q and is fair
        ce = res.counterexample
        cycle = ce.trace[ce.cycle_start:]
        assert cycle
        for t in cycle:
            assert not sysm.eval_pred(t.target, q)


@pytest.mark.parametrize("seed", range(12))
def test_oracle_equivalence_random_models(seed):
    m = random_model(seed)
    em = compile_model(m)
    # deadlock verdicts agree
    naive_dead = bool(naive_deadlocks(m))
    r = check_deadlock(m)
    assert (r.verdict == "fail") == naive_dead
    if r.verdict == "fail":
        assert replay(m, r.counterexample)
    # invariant verdicts agree
    text = random_invariant_expr(seed, m)
    expr = parse_expr(text)
    sysm = AsyncSystem(m)
    ok = naive_invariant_holds(m, lambda _em, s: sysm.eval_pred(s, expr))
    res = check_invariant(m, Property.invariant("rand", expr))
    assert (res.verdict == "pass") == ok
    if res.verdict == "fail":
        assert replay(m, res.counterexample)
