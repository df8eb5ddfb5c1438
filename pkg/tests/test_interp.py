import pytest

import raceset.miniir.interp as interp
from conftest import FIXTURES
from mirtext import kernel
from raceset.kmodel import AccessKind
from raceset.miniir import load_function, parse
from raceset.oracle import (
    ConcreteInstance,
    InvalidInstance,
    OutOfBounds,
    StepLimitExceeded,
    detect_races,
    load_instance,
    run,
)


def gespmm(name="gespmm_alg2"):
    return load_function(str(FIXTURES / f"{name}.mir"))


def instance(name):
    return load_instance(str(FIXTURES / "instances" / f"{name}.json"))


def test_values_computed():
    f = gespmm()
    inst = instance("gespmm_small")
    log = run(inst, f)
    # C[row, tx] for row 0 is written once per nonzero of row 0
    writes = [e for e in log if e.array == "C" and e.kind is AccessKind.WRITE and e.cell == (0, 0)]
    assert len(writes) == 2
    staged = [e for e in log if e.array == "sm_k" and e.kind is AccessKind.WRITE]
    assert {e.statement for e in staged} == {"F"}
    assert all(e.shared for e in staged)


def test_log_point_snapshot():
    log = run(instance("gespmm_small"), gespmm())
    e = next(e for e in log if e.statement == "T")
    assert {"bx", "ty", "tx", "ptr", "kk", "rs", "re", "M"} <= set(e.point)
    assert e.point["row"] == 2 * e.block[0] + e.thread[1]
    assert e.index_names == ("s",) or e.array != "sm_k"


def test_warp_groups():
    log = run(instance("gespmm_small"), gespmm())
    for e in log:
        assert e.group == e.block + (e.thread[1],)


def test_barrier_orders_stage_and_use():
    assert not detect_races(run(instance("gespmm_small"), gespmm())).race_found
    v = detect_races(run(instance("gespmm_small"), gespmm("gespmm_nobarrier")))
    assert v.race_found
    assert {(a.statement, b.statement) for a, b in v.pairs} <= {("F", "T"), ("T", "F")}


def test_empty_matrix_no_staging():
    log = run(instance("gespmm_empty"), gespmm("gespmm_nobarrier"))
    assert all(e.statement == "I" for e in log)
    assert not detect_races(log).race_found


def test_missing_parameter():
    inst = ConcreteInstance({"M": 4}, instance("gespmm_small").arrays, (2,), (4, 2))
    with pytest.raises(InvalidInstance):
        run(inst, gespmm())


def test_out_of_bounds():
    f = parse(kernel("entry:\n  %t = call tid.x\n  %u = add %t, 3\n  store 1, %A[%u]\n  ret"))
    with pytest.raises(OutOfBounds):
        run(ConcreteInstance({"n": 4}, csr=None), f)


def test_step_limit(monkeypatch):
    monkeypatch.setattr(interp, "STEP_LIMIT", 500)
    f = parse(kernel("entry:\n  br spin\nspin:\n  %x = add 1, 1\n  br spin"))
    with pytest.raises(StepLimitExceeded):
        run(ConcreteInstance({"n": 1}, csr=None), f)


def test_launch_override():
    f = parse(kernel("entry:\n  %t = call tid.x\n  store 1, %A[%t]\n  ret"))
    log = run(ConcreteInstance({"n": 8}, csr=None, grid=(1,), block=(8,)), f)
    assert sorted(e.cell for e in log) == [(i,) for i in range(8)]
