import pytest

from conftest import FIXTURES
from raceset.modeltext import ModelTextError, load_model, parse_model, render_model
from raceset.oracle import enumerate_set, points_of

MODELS = ["polyp", "gespmm_alg2", "gespmm_nobarrier"]


@pytest.mark.parametrize("name", MODELS)
def test_render_parse_round_trip(name):
    m = load_model(str(FIXTURES / f"{name}.model"))
    text = render_model(m)
    back = parse_model(text)
    assert render_model(back) == text
    assert back.params == m.params and back.grid == m.grid
    assert [s.label for s in back.statements] == [s.label for s in m.statements]


def test_parsed_gespmm_fields():
    m = load_model(str(FIXTURES / "gespmm_alg2.model"))
    assert m.params == ("M", "N", "K", "A_S", "rs", "re")
    assert m.arrays["sm_k"].space.value == "shared"
    assert m.param_bounds["M"][0] == 1
    t = m.statement("T")
    assert [a.array.name for a in t.reads] == ["sm_k", "sm_v", "B", "C"]
    # the free column coordinate of B ranges over 0 <= c < K
    b = t.reads[2].rel
    env = {"M": 4, "N": 4, "K": 3, "A_S": 6, "rs": 0, "re": 4}
    point = {"bx": 0, "ty": 0, "tx": 1, "it": 0, "ptr": 0, "kk": 0}
    fixed = {**env, **dict(zip(b.in_dims, [point[d] for d in t.dims]))}
    cells = {tuple(c[o] for o in b.out_dims)
             for d in b.disjuncts for c in points_of(d.constraints, b.out_dims, fixed, d.exists)}
    assert sorted(cells) == [(0, 1), (1, 1), (2, 1)]


def test_comments_and_blank_lines_ignored():
    text = "# head\n\nkernel k   # trailing\nparams: n\narrays:\n  global X[n] f32\n" \
           "statement S [i]:\n  domain: 0 <= i < n\n  write X[i]\nschedule:\n  S -> [0, i]\n"
    m = parse_model(text)
    assert enumerate_set(m.statement("S").domain, 5, {"n": 2}) == {(0,), (1,)}


@pytest.mark.parametrize("text, line", [
    ("kernel k\nparams: n\nbogus line\n", 3),
    ("kernel k\nparams: n\narrays:\n  global X[n] f32\nstatement S [i]:\n  domain: 0 <= i <\n", 6),
    ("kernel k\nparams: n\narrays:\n  global X[n] f32\nstatement S [i]:\n  domain: 0 <= i < n\n"
     "  write Y[i]\nschedule:\n  S -> [0]\n", None),
])
def test_errors_carry_line_numbers(text, line):
    with pytest.raises((ModelTextError, ValueError)) as e:
        parse_model(text)
    if line is not None:
        assert isinstance(e.value, ModelTextError) and e.value.line == line
