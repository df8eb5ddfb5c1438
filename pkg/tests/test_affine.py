import pytest

from raceset.isetcore import (
    PROVEN_INFEASIBLE,
    AffineExpr,
    Constraint,
    Kind,
    eq,
    gcd_normalize,
    ge,
    lt,
)


def test_arithmetic_and_canonical_form():
    e = AffineExpr.var("i") * 2 + AffineExpr.var("j") - 3
    assert e.coeff("i") == 2 and e.coeff("j") == 1 and e.constant == -3
    assert e - e == AffineExpr.const(0)
    assert AffineExpr({"i": 0, "j": 1}) == AffineExpr.var("j")
    assert hash(AffineExpr({"a": 1, "b": 2})) == hash(AffineExpr({"b": 2, "a": 1}))


def test_non_affine_product_rejected():
    with pytest.raises(ValueError):
        AffineExpr.var("i") * AffineExpr.var("j")


def test_substitute_and_evaluate():
    e = AffineExpr.var("ptr") + AffineExpr.var("tx")
    f = e.substitute({"ptr": AffineExpr.var("rs") + AffineExpr.var("it", 4)})
    assert f.evaluate({"rs": 2, "it": 1, "tx": 3}) == 9


def test_gcd_tightening_keeps_integer_points():
    c = gcd_normalize(Constraint(AffineExpr.var("x", 2) - 3))  # 2x >= 3
    assert c == Constraint(AffineExpr.var("x") - 2)  # x >= 2


def test_gcd_equality_without_solution():
    assert gcd_normalize(Constraint(AffineExpr.var("x", 2) - 1, Kind.EQUALS_ZERO)) is PROVEN_INFEASIBLE
    assert not PROVEN_INFEASIBLE


def test_comparison_helpers():
    assert lt("i", "n").holds({"i": 2, "n": 3})
    assert not lt("i", "n").holds({"i": 3, "n": 3})
    assert eq("i", 4).holds({"i": 4})
    assert ge("i", 0).holds({"i": 0})


def test_negations_cover_complement():
    c = eq("x", 2)
    for x in range(-3, 6):
        inside = c.holds({"x": x})
        outside = any(n.holds({"x": x}) for n in c.negations())
        assert inside != outside


def test_split_by_parameters():
    e = AffineExpr({"i": 2, "n": -1}, 3)
    assert e.split(["n"]) == ({"i": 2}, {"n": -1})
