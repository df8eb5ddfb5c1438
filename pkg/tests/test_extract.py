import pytest

from conftest import FIXTURES
from mirtext import kernel
from raceset.depcheck import Summary, races
from raceset.isetcore import AffineExpr
from raceset.miniir import UnsupportedConstruct, extract_model, load_function, parse, sections
from raceset.modeltext import parse_model, render_model
from raceset.oracle import ConcreteInstance, enumerate_set, load_instance, run

MIR = ["gespmm_alg2", "gespmm_nobarrier", "spmv_csr"]


def fixture_model(name):
    return extract_model(load_function(str(FIXTURES / f"{name}.mir")))


def test_gespmm_statements():
    m = fixture_model("gespmm_alg2")
    assert [s.label for s in m.statements] == ["I", "F", "T"]
    assert m.params == ("M", "N", "K", "A_S", "rs", "re")
    assert m.statement("I").dims == ("bx", "ty", "tx")
    assert m.statement("F").dims[-1] == "ptr"
    assert m.statement("T").dims[-1] == "kk"
    assert m.grid.barrier_span == ("tx",)
    assert {a.array.name for a in m.statement("F").writes} == {"sm_k", "sm_v"}


def test_gespmm_phases():
    m = fixture_model("gespmm_alg2")
    n = AffineExpr.var("n_ptr")
    assert m.schedule.phase("F") == n * 2
    assert m.schedule.phase("T") == n * 2 + 1


def test_gespmm_row_range_assumptions():
    m = fixture_model("gespmm_alg2")
    ctx = m.context()
    assert all(c.holds({"rs": 2, "re": 5, "A_S": 6, "M": 1, "N": 1, "K": 1}) for c in ctx)
    assert not all(c.holds({"rs": 5, "re": 2, "A_S": 6, "M": 1, "N": 1, "K": 1}) for c in ctx)


def test_single_store_kernel():
    m = extract_model(parse(kernel("entry:\n  %t = call tid.x\n  store 1, %A[%t]\n  ret")))
    (s,) = m.statements
    assert s.label == "entry" and s.dims == ("tx",)
    assert enumerate_set(s.writes[0].rel, 5, {"n": 4}) == {(t, t) for t in range(-5, 6)}
    assert races(m).verdict is Summary.RACE_FREE


def test_empty_kernel_has_no_statements():
    m = extract_model(parse("kernel @k(%n: i32)\n{\n}\n"))
    assert m.statements == []
    assert races(m).verdict is Summary.RACE_FREE


def test_section_hints_rename():
    f = parse(kernel("entry:\n  %t = call tid.x\n  store 1, %A[%t]\n  barrier\n  store 2, %A[0]\n  ret"))
    assert [s.label for s in sections(f)] == ["entry_0", "entry_1"]
    m = extract_model(f, {"entry_0": "W", "entry_1": "Z"})
    assert [s.label for s in m.statements] == ["W", "Z"]
    assert races(m).verdict is Summary.RACE_FOUND


@pytest.mark.parametrize("body", [
    "entry:\n  %t = call tid.x\n  %o = atomic.add %A[%t], 1\n  ret",
    "entry:\n  %t = call tid.x\n  %r = call @helper(%t)\n  store 1, %A[%t]\n  ret",
    "entry:\n  %t = call tid.x\n  store 1, %A[%t]\n  barrier.warp3\n  ret",
])
def test_unsupported_constructs(body):
    with pytest.raises(UnsupportedConstruct):
        extract_model(parse(kernel(body)))


def test_divergent_barrier_rejected():
    text = kernel("""
entry:
  %t = call tid.x
  %c = icmp slt %t, 2
  br %c, a, b
a:
  barrier
  br b
b:
  store 1, %A[%t]
  ret
""")
    with pytest.raises(UnsupportedConstruct):
        extract_model(parse(text))


@pytest.mark.parametrize("name", MIR)
def test_round_trip_through_text(name):
    m = fixture_model(name)
    text = render_model(m)
    assert render_model(parse_model(text)) == text


@pytest.mark.parametrize("name, inst", [("gespmm_alg2", "gespmm_small"), ("gespmm_nobarrier", "gespmm_long_row"),
                                        ("spmv_csr", "spmv_mid")])
def test_phase_matches_interpreter(name, inst):
    f = load_function(str(FIXTURES / f"{name}.mir"))
    m = extract_model(f)
    instance = load_instance(str(FIXTURES / "instances" / f"{inst}.json"))
    checked = 0
    for e in run(instance, f):
        phase = m.schedule.phase(e.statement)
        names = phase.names()
        if names <= set(e.point):
            assert phase.evaluate(e.point) == e.phase
            checked += 1
    assert checked


def test_model_and_interpreter_agree_on_race_free_spmv():
    f = load_function(str(FIXTURES / "spmv_csr.mir"))
    assert races(extract_model(f)).verdict is Summary.RACE_FREE
    inst = ConcreteInstance({"M": 8, "K": 4, "A_S": 3},
                            {"rowPtr": [0, 1, 1, 2, 2, 3, 3, 3, 3], "colInd": [0, 1, 2]}, (2,), (4,))
    from raceset.oracle import detect_races
    assert not detect_races(run(inst, f)).race_found
