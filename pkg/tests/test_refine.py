import dataclasses

from pmlcheck import nodes as n
from pmlcheck import parse
from pmlcheck.frontend import parse_expr
from pmlcheck.refine import (
    RULE_NAMES,
    c_expr,
    collapse_refined,
    generate_program,
    refine_declaration,
    refine_statement,
    refined_automaton,
    rule_coverage_report,
)
from pmlcheck.semantics import build_automaton

from corpus import ALL_CONSTRUCTS_SRC, all_constructs_model, pipeline_model


def decl_of(src, which=-1):
    m = parse(src)
    return m, m.var_decls[which]


def test_d1_skip_is_one():
    m = parse("active proctype P(){ skip }")
    cov = {}
    assert refine_declaration(n.Skip(), m, cov) == "1"
    assert cov["d1"] == 1


def test_d3_byte_to_uchar():
    m, d = decl_of("byte x;")
    assert refine_declaration(d, m) == "uchar x;"


def test_c6_proctype_to_void_function():
    m = parse("byte x; proctype Work(byte level){ x = level } init { run Work(2) }")
    out = refine_statement(m.proctype("Work"), m)
    assert out.startswith("void Work(uchar level)")
    assert "x = level;" in out


def test_d2_bit_and_bool_to_uchar():
    m = parse("bit a; bool b;")
    cov = {}
    assert refine_declaration(m.var_decls[0], m, cov) == "uchar a;"
    assert refine_declaration(m.var_decls[1], m, cov) == "uchar b;"
    assert cov["d2"] == 2


def test_d4_array_initializer_broadcast():
    m, d = decl_of("byte a[4] = 1;")
    out = refine_declaration(d, m)
    assert out == "uchar a[4] = {1, 1, 1, 1};"


def test_d5_mtype_descending_defines():
    m = parse("mtype = {a, b, c}")
    out = refine_declaration(n.MtypeDecl(m.mtype_decls), m)
    assert out.splitlines() == ["#define a 3", "#define b 2", "#define c 1"]


def test_d6_mtype_variable_is_int():
    m = parse("mtype = {a}\nmtype v;")
    assert refine_declaration(m.var_decls[0], m) == "int v;"


def test_d7_typedef_struct():
    m = parse("typedef Pair { byte a; byte b }")
    out = refine_declaration(m.type_decls[0], m)
    assert out == "struct Pair { uchar a; uchar b; };"


def test_d8_channel_struct_array_and_ring():
    m = parse("chan c = [4] of {byte, byte}")
    out = refine_declaration(m.chan_decls[0], m, chan_index=0)
    lines = out.splitlines()
    assert lines[0] == "struct channel_0 { uchar f0; uchar f1; };"
    assert lines[1] == "struct channel_0 c_slots[4];"
    assert lines[2] == "rt_chan c = RT_CHAN_INIT(4, 2);"


def test_c5_guard_to_if():
    m = parse("byte x; active proctype P(){ if :: x > 0 -> x = x - 1 :: else -> skip fi }")
    stmt = m.proctypes[0].body[0]
    out = refine_statement(stmt, m, m.proctypes[0])
    assert "if (x > 0) {" in out
    assert "x = x - 1;" in out


def test_c2_do_od_to_while_loop():
    m = parse("byte x; active proctype P(){ do :: x < 2 -> x = x + 1 :: else -> break od }")
    out = refine_statement(m.proctypes[0].body[0], m, m.proctypes[0])
    assert out.splitlines()[0] == "while (1) {"
    assert "break;" in out


def test_c7_three_option_switch():
    m = parse(
        "byte x; active proctype P(){ if :: x = 1 :: x = 2 :: x = 3 fi }"
    )
    out = refine_statement(m.proctypes[0].body[0], m, m.proctypes[0])
    assert "switch (stub_func_0()) {" in out
    for k in (1, 2, 3):
        assert f"case {k}:" in out


def test_c3_c4_per_field_channel_ops():
    m = pipeline_model()
    unit = generate_program(m, name="pipe")
    text = unit.text
    assert text.count("enqueue(&link, ") == 2  # one call per message field
    assert text.count("dequeue(&link)") == 2
    assert 'rt_chan link = RT_CHAN_INIT(2, 2);' in text


def test_skip_process_body_is_one():
    m = parse("active proctype P(){ skip }")
    unit = generate_program(m, name="skiponly")
    assert "    1;" in unit.text
    assert "void P(void)" in unit.text


def test_c8_main_spawns_and_joins_all():
    m = all_constructs_model()
    unit = generate_program(m, name="allc")
    text = unit.text
    assert "int main(void)" in text
    assert text.count("pthread_create(") == 2
    assert text.count("pthread_join(") == 2
    assert "rt_entry_0" in text and "rt_entry_1" in text


def test_all_sixteen_rules_fire():
    m = all_constructs_model()
    unit = generate_program(m, name="allc")
    for rule in RULE_NAMES:
        assert unit.coverage.get(rule, 0) >= 1, f"rule {rule} never fired"
    report = rule_coverage_report(unit)
    assert "all 16 rules fired" in report


def test_generation_is_byte_deterministic():
    m1 = parse(ALL_CONSTRUCTS_SRC)
    m2 = parse(ALL_CONSTRUCTS_SRC)
    a = generate_program(m1, name="allc").text
    b = generate_program(m2, name="allc").text
    assert a == b
    assert generate_program(m1, name="allc", trace=True).text == generate_program(
        m2, name="allc", trace=True
    ).text


def test_stub_specs_one_per_nondet_site():
    m = all_constructs_model()
    unit = generate_program(m, name="allc")
    assert len(unit.stub_specs) == 1
    spec = unit.stub_specs[0]
    assert spec.arity == 3
    assert f"int {spec.name}(void) {{ return 1 + rand() % 3; }}" in unit.text


def test_reserved_identifiers_are_renamed():
    m = parse("byte clock; active proctype P(){ clock = clock + 1 }")
    unit = generate_program(m, name="resv")
    assert "uchar clock_;" in unit.text
    assert "clock_ = clock_ + 1;" in unit.text


def test_strict_mode_emits_retry():
    m = parse("byte x; active proctype P(){ if :: x > 0 -> x = 0 fi }")
    plain = generate_program(m, name="s").text
    strict = generate_program(m, name="s", strict=True).text
    assert "rt_blocked();" in plain
    assert "goto" in strict and "rt_block_wait()" in strict


def test_refined_automaton_two_field_send():
    m = pipeline_model()
    proc = m.proctype("Producer")
    dp = refined_automaton(proc, m)
    send_micro = [e for e in dp.edges if e.micro is not None]
    assert len(send_micro) == 2
    chain = send_micro[0].micro[0]
    assert send_micro[0].micro == (chain, 0)
    assert send_micro[1].micro == (chain, 1)
    # the chain collapses back to the original send transition
    collapsed = collapse_refined(dp)
    source = build_automaton(proc, m)
    assert {(e.src, e.label(), e.dst) for e in collapsed.edges} == {
        (e.src, e.label(), e.dst) for e in source.edges
    }


def test_refined_automaton_channel_free_is_isomorphic():
    m = parse("byte x; active proctype P(){ x = 1; x = 2 }")
    proc = m.proctypes[0]
    dp = refined_automaton(proc, m)
    assert all(e.micro is None for e in dp.edges)
    src = build_automaton(proc, m)
    assert dp.locations == src.locations
    assert len(dp.edges) == len(src.edges)


def test_collapse_map_total_and_surjective():
    m = all_constructs_model()
    for proc in m.proctypes:
        dp = refined_automaton(proc, m)
        src = build_automaton(proc, m)
        assert set(dp.collapse_map) == set(dp.locations)
        assert set(dp.collapse_map.values()) == set(src.locations)


def test_c_expr_parenthesization():
    # nested operands are parenthesized, so C precedence cannot differ
    e = parse_expr("(a + b) * 2 - -c")
    text = c_expr(dataclasses.replace(e))
    assert text == "((a + b) * 2) - (-c)"
