import itertools

import pytest

from conftest import FIXTURES
from raceset.kmodel import (
    AccessKind,
    ArrayRef,
    MemSpace,
    ModelError,
    UndeclaredParameter,
    build_access,
    build_domain,
    happens_before_pair,
    ordered,
)
from raceset.modeltext import load_model, parse_model
from raceset.oracle import enumerate_set, union_points


@pytest.fixture(scope="module")
def polyp():
    return load_model(str(FIXTURES / "polyp.model"))


@pytest.fixture(scope="module")
def gespmm():
    return load_model(str(FIXTURES / "gespmm_alg2.model"))


def test_domain_counts(polyp):
    dom = build_domain(polyp)
    assert set(dom.keys()) == {"S", "T"}
    assert len(enumerate_set(dom["S"], 6, {"n": 3})) == 3
    assert len(enumerate_set(dom["T"], 6, {"n": 3})) == 9


def test_access_relation(polyp):
    writes = build_access(polyp, AccessKind.WRITE)
    assert enumerate_set(writes[("S", "C")], 6, {"n": 2}) == {(0, 0, 0), (1, 1, 1)}
    reads = build_access(polyp, AccessKind.READ)
    assert {k[1] for k in reads.keys()} == {"A", "B", "C"}


def test_grid_dims_lead_every_domain(gespmm):
    assert gespmm.grid.names == ("bx", "ty", "tx")
    for s in gespmm.statements:
        assert s.dims[:3] == ("bx", "ty", "tx")
    assert gespmm.grid.barrier_span == ("tx",)
    assert gespmm.grid.group_names == ("bx", "ty")


def test_shared_array_needs_static_extent():
    from raceset.isetcore import AffineExpr
    with pytest.raises(ModelError):
        ArrayRef("sm", MemSpace.SHARED, 1, extents=(AffineExpr.var("n"),))


def test_undeclared_parameter_rejected():
    text = (FIXTURES / "polyp.model").read_text().replace("domain: 0 <= k < n", "domain: 0 <= k < m")
    with pytest.raises((UndeclaredParameter, ValueError)):
        parse_model(text)


def _instances(model, params):
    out = []
    for s in model.statements:
        for p in union_points(model.full_domain(s), params):
            out.append((s.label, p))
    return out


def test_happens_before_is_strict_partial_order(gespmm):
    params = {"M": 4, "N": 4, "K": 2, "A_S": 6, "rs": 1, "re": 6}
    inst = _instances(gespmm, params)
    env = lambda p: {**params, **p}  # noqa: E731
    hb = {(i, j) for (i, a), (j, b) in itertools.permutations(enumerate(inst), 2)
          if ordered(gespmm, a[0], env(a[1]), b[0], env(b[1]))}
    assert all(not ordered(gespmm, s, env(p), s, env(p)) for s, p in inst)
    assert all((j, i) not in hb for i, j in hb)
    succ = {}
    for i, j in hb:
        succ.setdefault(i, set()).add(j)
    for i, js in succ.items():
        for j in js:
            assert succ.get(j, set()) <= js


def test_symbolic_happens_before_matches_concrete(gespmm):
    params = {"M": 4, "N": 4, "K": 2, "A_S": 6, "rs": 0, "re": 5}
    f, t = gespmm.statement("F"), gespmm.statement("T")
    rel = happens_before_pair(gespmm, f, t)
    got = {tuple(p[d] for d in rel.dims) for p in union_points(rel, params)}
    inst = _instances(gespmm, params)
    want = set()
    for (la, pa), (lb, pb) in itertools.product(inst, inst):
        if la == "F" and lb == "T" and ordered(gespmm, "F", {**params, **pa}, "T", {**params, **pb}):
            want.add(tuple(pa[d] for d in f.dims) + tuple(pb[d] for d in t.dims))
    assert got == want
