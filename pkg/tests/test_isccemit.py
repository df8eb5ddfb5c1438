import pytest

from conftest import FIXTURES, GOLDEN
from raceset.depcheck import races
from raceset.isccemit import TEST_TAIL, emit, emit_report_text
from raceset.kmodel import KernelModel
from raceset.miniir import extract_model, load_function
from raceset.modeltext import load_model
from raceset.notation import parse_rel, parse_set
from raceset.oracle import enumerate_set

CASES = [
    ("polyp.iscc", lambda: load_model(str(FIXTURES / "polyp.model"))),
    ("gespmm_alg2.iscc", lambda: load_model(str(FIXTURES / "gespmm_alg2.model"))),
    ("gespmm_alg2_mir.iscc", lambda: extract_model(load_function(str(FIXTURES / "gespmm_alg2.mir")))),
]


@pytest.mark.parametrize("golden, build", CASES, ids=[c[0] for c in CASES])
def test_matches_golden(golden, build):
    assert emit(build()).text == (GOLDEN / golden).read_text(encoding="utf-8")


def test_sections_and_tail():
    script = emit(load_model(str(FIXTURES / "polyp.model")))
    assert [k for k, _ in script.sections] == ["Domain", "Read", "Write", "Schedule"]
    assert script.text.endswith(TEST_TAIL)
    assert "RaW := (Write . (Read^-1)) * Before;" in script.text
    with pytest.raises(KeyError):
        script.section("Nope")


def test_domain_reparses_to_same_points():
    m = load_model(str(FIXTURES / "polyp.model"))
    dom = parse_set(emit(m).section("Domain"))
    for s in m.statements:
        assert enumerate_set(dom[s.label], 5, {"n": 3}) == enumerate_set(m.full_domain(s), 5, {"n": 3})


def test_write_relation_reparses():
    m = load_model(str(FIXTURES / "polyp.model"))
    text = emit(m).section("Write").removesuffix(" * Domain")
    w = parse_rel(text)
    # without "* Domain" the access map is unrestricted
    pts = enumerate_set(w[("S", "C")], 4, {"n": 2})
    assert pts == {(k, k, k) for k in range(-4, 5)}


def test_empty_model():
    script = emit(KernelModel("nothing"))
    assert script.section("Domain") == "{ }"
    assert script.text.startswith("# kernel nothing\n")


def test_report_text():
    text = emit_report_text(races(load_model(str(FIXTURES / "gespmm_nobarrier.model"))))
    lines = text.splitlines()
    assert lines[0] == "kernel gespmm_nobarrier (race check)"
    assert lines[-1] == "verdict: RaceFound"
    assert any(ln.strip().startswith("witness: F[") and "sm_k[" in ln for ln in lines)
    clean = emit_report_text(races(load_model(str(FIXTURES / "gespmm_alg2.model"))))
    assert "witness" not in clean and clean.endswith("verdict: RaceFree\n")
