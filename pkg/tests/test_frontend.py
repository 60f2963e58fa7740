import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmlcheck import nodes as n
from pmlcheck import parse, pretty, try_parse


def test_minimal_program():
    m = parse("byte x = 0; active proctype P(){ x = 1 }")
    assert len(m.var_decls) == 1
    assert len(m.proctypes) == 1
    assert m.proctypes[0].active


def test_mtype_declaration_order():
    m = parse("mtype = {a,b,c}")
    assert m.mtype_decls == ("a", "b", "c")
    assert n.mtype_value(m, "a") == 3
    assert n.mtype_value(m, "c") == 1


def test_rendezvous_channel_rejected():
    _, diags = try_parse("chan c = [0] of {byte}")
    assert diags and "rendezvous" in diags[0].message


@pytest.mark.parametrize("kw", ["unless", "timeout", "d_step", "goto"])
def test_rejected_keywords(kw):
    src = "active proctype P(){ %s }" % kw
    _, diags = try_parse(src)
    assert diags and "subset" in diags[0].message


def test_diagnostic_positions():
    _, diags = try_parse("byte x =\n  @")
    assert diags
    d = diags[0]
    assert d.line == 2 and d.col >= 1
    assert ":" in d.render()


def test_unknown_name_reported():
    _, diags = try_parse("active proctype P(){ y = 1 }")
    assert any("unknown name 'y'" in d.message for d in diags)


def test_duplicate_declaration():
    _, diags = try_parse("byte x; byte x")
    assert any("duplicate" in d.message for d in diags)


def test_init_requires_declared_proctype():
    _, diags = try_parse("init { run Nope() }")
    assert any("undeclared proctype" in d.message for d in diags)


def test_run_outside_init_rejected():
    _, diags = try_parse("proctype Q(){ skip }\nactive proctype P(){ run Q() }")
    assert any("init block" in d.message for d in diags)


def test_break_outside_loop_rejected():
    _, diags = try_parse("active proctype P(){ break }")
    assert any("break outside" in d.message for d in diags)


def test_channel_arity_checked():
    src = "chan c = [2] of {byte, byte}\nactive proctype P(){ c ! 1 }"
    _, diags = try_parse(src)
    assert any("2 fields" in d.message for d in diags)


def test_guard_and_else_options():
    m = parse(
        """
        byte x;
        active proctype P(){
            do
            :: x < 2 -> x = x + 1
            :: else -> break
            od
        }
        """
    )
    body = m.proctypes[0].body
    assert isinstance(body[0], n.DoOd)
    opts = body[0].options
    assert isinstance(opts[0][0], n.GuardedExpr)
    assert isinstance(opts[1][0], n.Else)


def test_typedef_and_fields():
    m = parse(
        """
        typedef Pair { byte a; byte b }
        Pair p;
        active proctype P(){ p.a = 1; p.b = p.a + 1 }
        """
    )
    assert m.type_decls[0].name == "Pair"


def test_atomic_and_send_receive():
    m = parse(
        """
        chan c = [2] of {byte}
        active proctype P(){ atomic { c ! 5; skip } }
        active proctype Q(){ byte v; c ? v }
        """
    )
    assert isinstance(m.proctypes[0].body[0], n.Atomic)


def test_define_preprocessing():
    m = parse("#define N 3\nbyte x = N;")
    assert m.var_decls[0].init == n.Num(3)


CORPUS = [
    "byte x = 0; active proctype P(){ x = 1 }",
    "mtype = {ping, pong}\nchan c = [1] of {mtype}\n"
    "active proctype A(){ do :: c ! ping :: c ! pong od }\n"
    "active proctype B(){ mtype m; do :: c ? m od }",
    """
    byte x; byte a[3] = 1;
    proctype W(byte k){
        do
        :: x < k -> x = x + 1
        :: else -> break
        od;
        a[0] = x
    }
    init { run W(2); run W(3) }
    """,
    """
    typedef Rec { byte f; int g }
    Rec r;
    active proctype P(){
        atomic { r.f = 1; r.g = r.g - 1 };
        if
        :: r.f == 1 -> skip
        :: r.f != 1 -> assert(false)
        fi
    }
    """,
]


@pytest.mark.parametrize("src", CORPUS)
def test_round_trip(src):
    m1 = parse(src)
    printed = pretty.model(m1)
    m2 = parse(printed)
    assert m1 == m2
    # a second round stays fixed
    assert pretty.model(m2) == printed


@given(st.binary(max_size=300))
@settings(max_examples=200, deadline=None)
def test_no_panic_on_arbitrary_bytes(data):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        return
    model, diags = try_parse(text)
    assert model is not None or diags


def test_shipped_model_files_parse_and_match_corpus():
    import os

    from corpus import MODELS_DIR, SHIPPED

    for fname, src in SHIPPED.items():
        path = os.path.join(MODELS_DIR, fname)
        text = open(path).read()
        assert parse(text) == parse(src), fname
