import pytest

from raceset.isetcore import UnionSet
from raceset.notation import NotationError, format_rel, format_set, parse_expr, parse_rel, parse_set
from raceset.oracle import enumerate_set


def test_parse_chain_and_literal_product():
    s = parse_set("[n] -> { S[i] : 0 <= 2i < n }")
    assert enumerate_set(s, 10, {"n": 7}) == {(0,), (1,), (2,), (3,)}
    assert parse_expr("4*it + 3", ["it"]) == parse_expr("4it + 3", ["it"])


def test_format_is_stable():
    text = "[n] -> { S[i, j] : 0 <= i < n and 0 <= j < n }"
    s = parse_set(text)
    assert format_set(s) == format_set(parse_set(format_set(s)))


def test_relation_with_output_expressions():
    r = parse_rel("[n] -> { S[k] -> C[k, k + 1] : 0 <= k < n }")
    assert enumerate_set(r, 5, {"n": 2}) == {(0, 0, 1), (1, 1, 2)}
    assert "S[k] -> C[" in format_rel(r)


def test_several_spaces_give_union():
    u = parse_set("{ S[i] : i = 0; T[i, j] : i = j = 1 }")
    assert isinstance(u, UnionSet)


def test_existential_round_trip():
    s = parse_set("{ S[i] : exists (e : i = 3e and 0 <= i <= 9) }")
    assert enumerate_set(parse_set(format_set(s)), 12) == {(0,), (3,), (6,), (9,)}


def test_empty_and_universe():
    assert enumerate_set(parse_set("{ S[i] : false }"), 3) == set()
    assert len(enumerate_set(parse_set("{ S[i] : -1 <= i <= 1 }"), 3)) == 3


@pytest.mark.parametrize("bad", ["{ S[i] : i >= }", "{ S[i] : i * i >= 0 }", "{ S[i] : j >= 0 }", "[n -> { S[i] }"])
def test_errors_have_positions(bad):
    with pytest.raises(NotationError) as e:
        parse_set(bad)
    assert e.value.line == 1 and e.value.col >= 1
