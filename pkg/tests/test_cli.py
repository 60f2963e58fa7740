import pytest

from pmlcheck.cli import main

from corpus import ALL_CONSTRUCTS_SRC, PIPELINE_SRC

DEADLOCKY = """
chan c = [1] of {byte}
chan d = [1] of {byte}
byte v; byte w;
active proctype A(){ c ? v; d ! 1 }
active proctype B(){ d ? w; c ! 1 }
"""


@pytest.fixture
def model_file(tmp_path):
    def write(src, name="model.pml"):
        path = tmp_path / name
        path.write_text(src)
        return str(path)

    return write


def test_parse_ok_and_error_exit_codes(model_file, capsys):
    path = model_file(PIPELINE_SRC)
    assert main(["parse", path]) == 0
    bad = model_file("byte x = @;", "bad.pml")
    assert main(["parse", bad]) == 2
    err = capsys.readouterr().err
    assert "bad.pml:1:" in err and "error:" in err


def test_check_deadlock_failure_writes_trace(model_file, tmp_path):
    path = model_file(DEADLOCKY)
    out = tmp_path / "out"
    assert main(["check", path, "--prop", "deadlock", "-o", str(out)]) == 1
    assert (out / "deadlock.trace").exists()
    assert (out / "deadlock.result").exists()


def test_check_invariant_pass(model_file, tmp_path):
    path = model_file(PIPELINE_SRC)
    out = tmp_path / "out"
    code = main(["check", path, "--invariant", "total <= 6", "-o", str(out)])
    assert code == 0


def test_refine_writes_stable_artifacts(model_file, tmp_path):
    path = model_file(ALL_CONSTRUCTS_SRC)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["refine", path, "-o", str(out1), "--name", "m"]) == 0
    assert main(["refine", path, "-o", str(out2), "--name", "m"]) == 0
    a = (out1 / "m_gen.c").read_bytes()
    b = (out2 / "m_gen.c").read_bytes()
    assert a == b
    assert (out1 / "m_coverage.txt").read_text().count(": ") >= 16


def test_conform_report(model_file, tmp_path, capsys):
    path = model_file(PIPELINE_SRC)
    out = tmp_path / "out"
    code = main(
        ["conform", path, "--invariant", "total <= 6", "--policy", "fifo",
         "-o", str(out)]
    )
    assert code == 0
    text = (out / "conformance.txt").read_text()
    assert "RESULT PASS" in text


def test_pacemaker_verify_cell(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["pacemaker", "verify", "--mode", "AAI", "-o", str(out)])
    assert code == 0
    captured = capsys.readouterr().out
    assert "inhibiting_a: pass" in captured


def test_pacemaker_derive_prints_modes(capsys):
    assert main(["pacemaker", "derive", "--condition", "missA"]) == 0
    out = capsys.readouterr().out.strip()
    assert out == "AOO AAI AAT"


def test_pacemaker_emit_is_parseable(capsys):
    assert main(["pacemaker", "emit", "--mode", "DDDR"]) == 0
    src = capsys.readouterr().out
    assert "proctype PaceGenerator" in src and "Accelerometer" in src


def test_usage_error_exit_code():
    assert main(["pacemaker", "verify", "--mode", "NOPE"]) == 2
    assert main(["check", "/nonexistent/file.pml"]) == 2
