"""End-to-end acceptance checks, one test per criterion.

Each check prints a single PASS/FAIL line; under pytest the lines are also
collected into the terminal summary. Run directly with
``python tests/test_acceptance.py`` for the lines alone.
"""

from __future__ import annotations

import os
import random
import subprocess
import sys
import time
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from brute import dependence_pairs as brute_pairs  # noqa: E402
from conftest import FIXTURES, GOLDEN, seed  # noqa: E402
from randsets import check_case  # noqa: E402
from raceset.depcheck import DependenceKind, Summary, dependences, fixed_params, races  # noqa: E402
from raceset.isccemit import emit  # noqa: E402
from raceset.isetcore import AffineExpr, Constraint  # noqa: E402
from raceset.kmodel import AccessKind  # noqa: E402
from raceset.miniir import Affine, dominators, extract_model, load_function, propagate, sections  # noqa: E402
from raceset.miniir.loops import control_loads  # noqa: E402
from raceset.miniir.propagate import model_name  # noqa: E402
from raceset.modeltext import load_model  # noqa: E402
from raceset.oracle import detect_races, enumerate_set, load_instance, run  # noqa: E402

RESULTS: list[str] = []

INSTANCES = {
    "gespmm_alg2": ["gespmm_small", "gespmm_long_row", "gespmm_empty"],
    "gespmm_nobarrier": ["gespmm_small", "gespmm_long_row", "gespmm_empty"],
    "spmv_csr": ["spmv_wide", "spmv_mid", "spmv_narrow"],
}
GOLDENS = {
    "polyp.iscc": lambda: load_model(str(FIXTURES / "polyp.model")),
    "gespmm_alg2.iscc": lambda: load_model(str(FIXTURES / "gespmm_alg2.model")),
    "gespmm_alg2_mir.iscc": lambda: extract_model(load_function(str(FIXTURES / "gespmm_alg2.mir"))),
}


def _record(n: int, title: str, check) -> None:
    try:
        detail = check()
    except Exception as e:
        line = f"criterion {n} FAIL  {title}: {type(e).__name__}: {e}"
        RESULTS.append(line)
        print(line)
        raise
    line = f"criterion {n} PASS  {title}: {detail}"
    RESULTS.append(line)
    print(line)


def _instance(name):
    return load_instance(str(FIXTURES / "instances" / f"{name}.json"))


def _symbolic_at(model, inst):
    """Race verdict with the instance's scalar parameters pinned; loaded bounds stay free."""
    pinned = {k: v for k, v in inst.params.items() if k in model.params}
    return races(model, assume=fixed_params(pinned))


# -- 1 ---------------------------------------------------------------------------


def check_reproduction():
    out = []
    for path, load in (("gespmm_alg2.model", lambda p: load_model(p)),
                       ("gespmm_alg2.mir", lambda p: extract_model(load_function(p)))):
        t0 = time.perf_counter()
        rep = races(load(str(FIXTURES / path)))
        dt = time.perf_counter() - t0
        assert rep.verdict is Summary.RACE_FREE, f"{path}: {rep.verdict.value}"
        assert dt < 10, f"{path} took {dt:.1f}s"
        out.append(f"{path} RaceFree in {dt:.2f}s")
    return "; ".join(out)


# -- 2 ---------------------------------------------------------------------------


def _in_log(log, label, point, grid, array, cell):
    for e in log:
        if e.statement != label or e.array != array or e.cell != tuple(cell):
            continue
        if all(e.point.get(k) == v for k, v in point.items() if k in e.point):
            if all(k in e.point for k in grid):
                return e
    return None


def check_known_bad():
    f = load_function(str(FIXTURES / "gespmm_nobarrier.mir"))
    model = extract_model(f)
    rep = races(model)
    assert rep.verdict is Summary.RACE_FOUND
    arrays = {w.array for w in rep.witnesses}
    assert arrays and arrays <= {"sm_k", "sm_v"}, arrays

    inst = _instance("gespmm_small")
    assert inst.params["M"] == inst.params["N"] == inst.params["K"] == 4
    assert len(inst.arrays["colInd"]) == 6 and inst.grid == (2,) and inst.block[0] == 4
    log = run(inst, f)
    verdict = detect_races(log)
    assert verdict.race_found

    pinned = _symbolic_at(model, inst)
    assert pinned.witnesses, "no witness at the instance parameters"
    pairs = {(id(a), id(b)) for a, b in verdict.pairs} | {(id(b), id(a)) for a, b in verdict.pairs}
    grid = model.grid.names
    matched = 0
    for w in pinned.witnesses:
        a = _in_log(log, w.source, w.source_point, grid, w.array, w.cell)
        b = _in_log(log, w.target, w.target_point, grid, w.array, w.cell)
        assert a is not None and b is not None, f"witness {w.to_dict()} not in the oracle log"
        assert (id(a), id(b)) in pairs, "witness accesses are not an unordered pair in the log"
        matched += 1
    return f"{len(verdict.pairs)} oracle pairs; {matched} symbolic witnesses found in the log"


# -- 3 ---------------------------------------------------------------------------


def check_polyp():
    m = load_model(str(FIXTURES / "polyp.model"))
    rel = dependences(m, DependenceKind.RAW)[("S", "T")]
    got = enumerate_set(rel, 5, {"n": 4})
    want = brute_pairs(m, {"n": 4}, AccessKind.WRITE, AccessKind.READ, "S", "T")
    assert got, "RaW S->T is empty"
    assert got == want, f"{len(got ^ want)} mismatches"
    return f"{len(got)} pairs, 0 mismatches"


# -- 4 ---------------------------------------------------------------------------


def check_property_suite():
    rng = random.Random(seed())
    bad = []
    for _ in range(1000):
        bad += check_case(rng)
    assert not bad, f"{len(bad)} mismatches, first: {bad[0]}"
    return f"1000 cases (seed {seed()}), 0 mismatches"


# -- 5 ---------------------------------------------------------------------------


def _affine_mismatches(f, log):
    prop = propagate(f, promote=control_loads(f))
    defs = f.definitions()
    dom = dominators(f)
    where = {s.label: s.block for s in sections(f)}
    checked = bad = 0
    for e in log:
        block = where[e.statement]
        names = set(e.index_names)
        names |= {n for n, (b, _, _) in defs.items() if b.label in dom[block] and b.label != block}
        for n in sorted(names):
            v = prop.values.get(n)
            if not isinstance(v, Affine):
                continue
            key = model_name(n)
            if key not in e.point or not v.expr.names() <= set(e.point):
                continue
            checked += 1
            if v.expr.evaluate(e.point) != e.point[key]:
                bad += 1
    return checked, bad


def check_extraction():
    runs = checked = 0
    for name, insts in INSTANCES.items():
        f = load_function(str(FIXTURES / f"{name}.mir"))
        model = extract_model(f)
        for iname in insts:
            inst = _instance(iname)
            log = run(inst, f)
            oracle = detect_races(log).label
            symbolic = _symbolic_at(model, inst).verdict.value
            assert symbolic == oracle, f"{name}/{iname}: symbolic {symbolic}, oracle {oracle}"
            c, bad = _affine_mismatches(f, log)
            assert c and not bad, f"{name}/{iname}: {bad} of {c} affine values differ"
            runs += 1
            checked += c
    return f"{runs} fixture/instance runs agree; {checked} affine values match"


# -- 6 ---------------------------------------------------------------------------


def _tightening(inst, model):
    """Instance envelope: scalar params capped by the instance, loaded bounds within [0, nnz]."""
    nnz = len(inst.arrays["colInd"])
    cons = []
    for p, v in inst.params.items():
        if p in model.params:
            cons.append(Constraint(AffineExpr.const(v) - AffineExpr.var(p)))
    cons.append(Constraint(AffineExpr.const(nnz) - AffineExpr.var("A_S")))
    return cons


def check_superset():
    f = load_function(str(FIXTURES / "spmv_csr.mir"))
    model = extract_model(f)
    fresh = set(model.params) - set(f.scalar_params)
    assert fresh == {"lo", "hi"}, fresh
    ctx = model.context()
    # containment: 0 <= lo <= hi <= A_S
    assert all(c.holds({"lo": 1, "hi": 2, "A_S": 3, "M": 1, "K": 1}) for c in ctx)
    for bad in ({"lo": 3, "hi": 2, "A_S": 3}, {"lo": -1, "hi": 2, "A_S": 3}, {"lo": 0, "hi": 4, "A_S": 3}):
        assert not all(c.holds({**bad, "M": 1, "K": 1}) for c in ctx), bad

    names = INSTANCES["spmv_csr"]
    insts = [_instance(n) for n in names]
    for a, b in zip(insts, insts[1:]):
        assert all(b.params[k] <= a.params[k] for k in b.params)
        assert len(b.arrays["colInd"]) <= len(a.arrays["colInd"])
    seen = []
    for kernel in ("spmv_csr", "gespmm_alg2", "gespmm_nobarrier"):
        kf = load_function(str(FIXTURES / f"{kernel}.mir"))
        km = extract_model(kf)
        chain = names if kernel == "spmv_csr" else ["gespmm_long_row", "gespmm_small", "gespmm_empty"]
        verdicts = []
        assume: list[Constraint] = []
        for iname in chain:
            inst = _instance(iname)
            assume = assume + _tightening(inst, km)
            v = races(km, assume=assume).verdict
            verdicts.append(v)
            if v is Summary.RACE_FREE:
                assert not detect_races(run(inst, kf)).race_found, f"{kernel}/{iname}: oracle race under RaceFree"
        for x, y in zip(verdicts, verdicts[1:]):
            assert not (x is Summary.RACE_FREE and y is Summary.RACE_FOUND), f"{kernel}: flipped {verdicts}"
        seen.append(f"{kernel} " + " > ".join(v.value for v in verdicts))
    return "fresh params lo, hi; " + "; ".join(seen)


# -- 7 ---------------------------------------------------------------------------

_EMIT_SNIPPET = """
import sys
from raceset.isccemit import emit
from raceset.miniir import extract_model, load_function
from raceset.modeltext import load_model
d = sys.argv[1]
for m in (load_model(d + '/polyp.model'), load_model(d + '/gespmm_alg2.model'),
          extract_model(load_function(d + '/gespmm_alg2.mir'))):
    sys.stdout.write(emit(m).text)
"""


def check_emission():
    for name, build in GOLDENS.items():
        golden = (GOLDEN / name).read_bytes()
        first = emit(build()).text.encode("utf-8")
        second = emit(build()).text.encode("utf-8")
        assert first == golden and second == golden, f"{name} differs from golden"
        assert b"\r" not in golden
    expected = b"".join((GOLDEN / n).read_bytes() for n in GOLDENS)
    for hashseed in ("0", "1", "7"):
        env = {**os.environ, "PYTHONHASHSEED": hashseed}
        out = subprocess.run([sys.executable, "-c", _EMIT_SNIPPET, str(FIXTURES)], env=env,
                             capture_output=True, check=True).stdout
        assert out == expected, f"output differs under PYTHONHASHSEED={hashseed}"
    return f"{len(GOLDENS)} scripts byte-identical over 2 runs and 3 hash seeds"


CRITERIA = [
    (1, "Ge-SpMM reproduction", check_reproduction),
    (2, "known-bad detection", check_known_bad),
    (3, "polyp RaW S->T", check_polyp),
    (4, "isetcore property suite", check_property_suite),
    (5, "extraction fidelity", check_extraction),
    (6, "superset-domain monotonicity", check_superset),
    (7, "emission stability", check_emission),
]


def test_criterion_1_gespmm_reproduction():
    _record(*CRITERIA[0])


def test_criterion_2_known_bad_detection():
    _record(*CRITERIA[1])


def test_criterion_3_polyp_dependences():
    _record(*CRITERIA[2])


def test_criterion_4_property_suite():
    _record(*CRITERIA[3])


def test_criterion_5_extraction_fidelity():
    _record(*CRITERIA[4])


def test_criterion_6_superset_monotonicity():
    _record(*CRITERIA[5])


def test_criterion_7_emission_stability():
    _record(*CRITERIA[6])


def main() -> int:
    failed = 0
    for n, title, check in CRITERIA:
        try:
            _record(n, title, check)
        except Exception:
            failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
