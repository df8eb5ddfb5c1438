from dataclasses import replace

import pytest

from brute import dependence_pairs as brute_pairs
from conftest import FIXTURES
from raceset.depcheck import (
    DependenceKind,
    Summary,
    dependence_report,
    dependences,
    fixed_params,
    races,
)
from raceset.kmodel import AccessKind, GridConfig, PhasedSchedule, ordered
from raceset.modeltext import load_model, parse_model
from raceset.oracle import enumerate_set, union_points


def model(name):
    return load_model(str(FIXTURES / f"{name}.model"))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_polyp_raw_matches_enumeration(n):
    m = model("polyp")
    rel = dependences(m, DependenceKind.RAW)[("S", "T")]
    want = brute_pairs(m, {"n": n}, AccessKind.WRITE, AccessKind.READ, "S", "T")
    assert enumerate_set(rel, n + 1, {"n": n}) == want
    assert want == {(k, k, k) for k in range(n)}


def test_polyp_dep_report():
    rep = dependence_report(model("polyp"))
    found = {(p.kind, p.source, p.target, p.array) for p in rep.pairs if p.verdict.is_nonempty}
    assert (DependenceKind.RAW, "S", "T", "C") in found
    assert (DependenceKind.WAW, "S", "T", "C") in found
    assert (DependenceKind.WAR, "T", "S", "C") not in found


def test_disjoint_arrays_are_independent():
    text = """kernel split
params: n
arrays:
  global X[n] f32
  global Y[n] f32
statement S [i]:
  domain: 0 <= i < n
  write X[i]
statement T [i]:
  domain: 0 <= i < n
  read Y[i]
schedule:
  S -> [0, i]
  T -> [1, i]
"""
    rep = dependence_report(parse_model(text))
    assert all({p.source, p.target} != {"S", "T"} for p in rep.pairs)
    assert not rep.races and rep.verdict is Summary.RACE_FREE


def test_gespmm_dep_mode_has_ordered_output_dependence():
    m = model("gespmm_alg2")
    rep = dependence_report(m)
    waw = [p for p in rep.pairs if p.kind is DependenceKind.WAW and (p.source, p.target) == ("T", "T")
           and p.array == "C"]
    assert waw and waw[0].verdict.is_nonempty
    w = waw[0].witness
    params = w.params
    assert ordered(m, "T", {**params, **w.source_point}, "T", {**params, **w.target_point})
    assert races(m).verdict is Summary.RACE_FREE


def test_races_free_and_found():
    assert races(model("gespmm_alg2")).verdict is Summary.RACE_FREE
    rep = races(model("gespmm_nobarrier"))
    assert rep.verdict is Summary.RACE_FOUND
    assert {p.array for p in rep.races} <= {"sm_k", "sm_v"}
    assert {(p.source, p.target) for p in rep.races} == {("F", "T")}


def test_single_thread_grid_is_race_free():
    m = model("gespmm_nobarrier")
    g = m.grid
    one = GridConfig(tuple((n, 1) for n, _ in g.block_dims), tuple((n, 1) for n, _ in g.thread_dims),
                     g.bindings, g.barrier_span)
    assert races(replace(m, grid=one)).verdict is Summary.RACE_FREE


def test_removing_barriers_only_adds_races():
    # collapsing every phase to 0 models deleting all barriers
    for name in ("gespmm_alg2", "polyp"):
        m = model(name)
        before = {(p.source, p.target, p.array) for p in races(m).races}
        times = {k: (v[0] * 0,) + tuple(v[1:]) for k, v in m.schedule.times.items()}
        flat = replace(m, schedule=PhasedSchedule(times))
        after = {(p.source, p.target, p.array) for p in races(flat).races}
        assert before <= after
    assert races(replace(model("gespmm_alg2"), schedule=PhasedSchedule(
        {k: (v[0] * 0,) + tuple(v[1:]) for k, v in model("gespmm_alg2").schedule.times.items()}))).races


def test_same_thread_dependences_are_ordered():
    m = model("gespmm_alg2")
    params = {"M": 3, "N": 4, "K": 2, "A_S": 6, "rs": 0, "re": 6}
    for kind in DependenceKind:
        deps = dependences(m, kind, fixed_params(params))
        for src, dst in deps.keys():
            rel = deps[(src, dst)]
            s, t = m.statement(src), m.statement(dst)
            for pt in union_points(rel, params):
                a = {d: pt[x] for d, x in zip(s.dims, rel.in_dims)}
                b = {d: pt[y] for d, y in zip(t.dims, rel.out_dims)}
                if all(a[d] == b[d] for d in m.grid.names):
                    assert ordered(m, src, {**params, **a}, dst, {**params, **b})


def test_witness_matches_fixed_parameters():
    rep = races(model("gespmm_nobarrier"), assume=fixed_params({"rs": 0, "re": 4}))
    for w in rep.witnesses:
        assert w.params["rs"] == 0 and w.params["re"] == 4
