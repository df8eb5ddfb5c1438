import json

import pytest

from conftest import FIXTURES, GOLDEN
from raceset.cli import EXIT_ANALYSIS, EXIT_INPUT, main, parse_grid, parse_params, CliError
from raceset.modeltext import parse_model, render_model
from raceset.modeltext import load_model

F = str(FIXTURES)


@pytest.mark.parametrize("path, code", [
    ("gespmm_alg2.model", 0), ("gespmm_alg2.mir", 0), ("gespmm_nobarrier.model", 1),
    ("gespmm_nobarrier.mir", 1), ("polyp.model", 0), ("spmv_csr.mir", 0),
])
def test_check_exit_codes(path, code, capsys):
    assert main(["check", f"{F}/{path}"]) == code
    assert capsys.readouterr().out.strip().endswith("RaceFree" if code == 0 else "RaceFound")


def test_inconclusive_exit_code(tmp_path, capsys):
    p = tmp_path / "far.model"
    p.write_text("""kernel far
params: n
assume: n >= 5000
grid:
  thread tx < 2 as tid.x
arrays:
  global X[n + 1] f32
statement S [tx, i]:
  domain: exists (e : i = 97e + 13 and n <= i <= n + 5)
  write X[i]
schedule:
  S -> [0, i]
""")
    assert main(["check", str(p), "--box", "4"]) == 2
    assert "reason:" in capsys.readouterr().out


def test_missing_file(capsys):
    code = main(["check", f"{F}/nope.model"])
    assert code > 2
    assert "no such file" in capsys.readouterr().err


def test_malformed_input(tmp_path, capsys):
    p = tmp_path / "bad.mir"
    p.write_text("kernel @k(%n: i32)\n{\nentry:\n  %a = add 1 2\n  ret\n}\n")
    assert main(["emit-iscc", str(p)]) == EXIT_INPUT
    assert ":4:" in capsys.readouterr().err


def test_unsupported_kernel(tmp_path, capsys):
    p = tmp_path / "atomic.mir"
    p.write_text("kernel @k(%n: i32, %A: global i32[%n])\n{\nentry:\n  %t = call tid.x\n"
                 "  %o = atomic.add %A[%t], 1\n  ret\n}\n")
    assert main(["check", str(p)]) == EXIT_ANALYSIS
    assert "UnsupportedConstruct" in capsys.readouterr().err


def test_structured_output(capsys):
    assert main(["check", f"{F}/gespmm_nobarrier.mir", "--format", "structured"]) == 1
    doc = json.loads(capsys.readouterr().out)
    assert doc["verdict"] == "RaceFound"
    hits = [r for r in doc["results"] if r["verdict"] == "NonEmpty"]
    assert hits and all(r["witness"]["array"] in ("sm_k", "sm_v") for r in hits)
    assert all(set(r) >= {"kind", "source", "target", "array", "cell", "verdict"} for r in doc["results"])


def test_params_pin_values(capsys):
    assert main(["check", f"{F}/gespmm_nobarrier.model", "--params", "rs=2,re=2"]) == 0
    assert main(["check", f"{F}/gespmm_nobarrier.model", "--params", "bogus=1"]) == EXIT_INPUT


def test_dep_mode(capsys):
    assert main(["check", f"{F}/polyp.model", "--mode", "dep"]) == 1
    out = capsys.readouterr().out
    assert "RaW S -> T on C: NonEmpty" in out


def test_emit_iscc_out_file(tmp_path):
    out = tmp_path / "p.iscc"
    assert main(["emit-iscc", f"{F}/polyp.model", "--out", str(out)]) == 0
    assert out.read_text() == (GOLDEN / "polyp.iscc").read_text()


def test_dump_model_round_trip(capsys, tmp_path):
    assert main(["dump-model", f"{F}/gespmm_alg2.mir"]) == 0
    text = capsys.readouterr().out
    assert render_model(parse_model(text)) == text
    p = tmp_path / "again.model"
    p.write_text(text)
    assert main(["check", str(p)]) == 0


def test_oracle_command(capsys):
    inst = f"{F}/instances/gespmm_small.json"
    assert main(["oracle", f"{F}/gespmm_alg2.mir", inst]) == 0
    assert main(["oracle", f"{F}/gespmm_nobarrier.mir", inst, "--format", "structured"]) == 1
    out = capsys.readouterr().out
    doc = json.loads(out[out.index("{"):])
    assert doc["verdict"] == "RaceFound" and doc["races"][0]["array"] in ("sm_k", "sm_v")


def test_oracle_rejects_bad_instance(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"params": {"M": 1, "N": 1, "K": 1}, "arrays": {"rowPtr": [1, 0]}}))
    assert main(["oracle", f"{F}/gespmm_alg2.mir", str(bad)]) == EXIT_INPUT


def test_grid_override(capsys):
    # one thread per block: nothing left to race with inside a block
    assert main(["check", f"{F}/gespmm_nobarrier.mir", "--grid", "2/1,1"]) == 0


def test_argument_parsers():
    assert parse_params("a=1, b=-2") == {"a": 1, "b": -2}
    assert parse_grid("2,1/4,2") == ((2, 1), (4, 2))
    for bad in ("a", "a=x"):
        with pytest.raises(CliError):
            parse_params(bad)
    with pytest.raises(CliError):
        parse_grid("0/4")
    with pytest.raises(SystemExit):
        main(["check"])
    assert load_model(f"{F}/polyp.model").name == "polyp"


def test_dump_empty_kernel(tmp_path, capsys):
    p = tmp_path / "empty.mir"
    p.write_text("kernel @empty(%n: i32)\n{\n}\n")
    assert main(["dump-model", str(p)]) == 0
    text = capsys.readouterr().out
    assert "statement" not in text and parse_model(text).statements == []
