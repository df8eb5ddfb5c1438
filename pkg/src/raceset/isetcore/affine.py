"""Affine expressions and constraints over named integer variables."""

from __future__ import annotations

import enum
from functools import reduce
from math import gcd
from typing import Iterable, Mapping, Union

Number = int
ExprLike = Union["AffineExpr", int, str]


class AffineExpr:
    """Integer affine form ``sum(c_v * v) + constant``.

    Terms with a zero coefficient are never stored, so two expressions are
    equal exactly when their canonical term tuples are equal. Whether a name
    denotes a dimension or a parameter is decided by the set that owns the
    expression, not by the expression itself.
    """

    __slots__ = ("_terms", "constant", "_hash")

    def __init__(self, coeffs: Mapping[str, int] | None = None, constant: int = 0):
        items = coeffs.items() if coeffs else ()
        self._terms = tuple(sorted((k, int(v)) for k, v in items if v))
        self.constant = int(constant)
        self._hash = None

    @classmethod
    def var(cls, name: str, coeff: int = 1) -> "AffineExpr":
        return cls({name: coeff})

    @classmethod
    def const(cls, value: int) -> "AffineExpr":
        return cls(None, value)

    @classmethod
    def lift(cls, value: ExprLike) -> "AffineExpr":
        if isinstance(value, AffineExpr):
            return value
        if isinstance(value, str):
            return cls.var(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"cannot build an affine expression from {value!r}")
        return cls.const(value)

    @property
    def coeffs(self) -> dict[str, int]:
        return dict(self._terms)

    @property
    def terms(self) -> tuple[tuple[str, int], ...]:
        return self._terms

    def split(self, params: Iterable[str]) -> tuple[dict[str, int], dict[str, int]]:
        """(dimension coefficients, parameter coefficients) given the parameter names."""
        params = set(params)
        dims = {k: v for k, v in self._terms if k not in params}
        return dims, {k: v for k, v in self._terms if k in params}

    def coeff(self, name: str) -> int:
        for k, v in self._terms:
            if k == name:
                return v
        return 0

    def names(self) -> set[str]:
        return {k for k, _ in self._terms}

    def is_constant(self) -> bool:
        return not self._terms

    def __add__(self, other: ExprLike) -> "AffineExpr":
        other = AffineExpr.lift(other)
        coeffs = dict(self._terms)
        for k, v in other._terms:
            coeffs[k] = coeffs.get(k, 0) + v
        return AffineExpr(coeffs, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr({k: -v for k, v in self._terms}, -self.constant)

    def __sub__(self, other: ExprLike) -> "AffineExpr":
        return self + (-AffineExpr.lift(other))

    def __rsub__(self, other: ExprLike) -> "AffineExpr":
        return AffineExpr.lift(other) - self

    def __mul__(self, k: int) -> "AffineExpr":
        if isinstance(k, AffineExpr):
            if k.is_constant():
                k = k.constant
            elif self.is_constant():
                return k * self.constant
            else:
                raise ValueError("product of two non-constant affine expressions")
        return AffineExpr({n: v * k for n, v in self._terms}, self.constant * k)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if isinstance(other, int) and not isinstance(other, bool):
            return not self._terms and self.constant == other
        if not isinstance(other, AffineExpr):
            return NotImplemented
        return self._terms == other._terms and self.constant == other.constant

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._terms, self.constant))
        return self._hash

    def substitute(self, mapping: Mapping[str, ExprLike]) -> "AffineExpr":
        """Replace variables by expressions (simultaneously)."""
        out = AffineExpr(None, self.constant)
        coeffs: dict[str, int] = {}
        for k, v in self._terms:
            if k in mapping:
                out = out + AffineExpr.lift(mapping[k]) * v
            else:
                coeffs[k] = coeffs.get(k, 0) + v
        return out + AffineExpr(coeffs)

    def rename(self, mapping: Mapping[str, str]) -> "AffineExpr":
        if not mapping:
            return self
        coeffs: dict[str, int] = {}
        for k, v in self._terms:
            k = mapping.get(k, k)
            coeffs[k] = coeffs.get(k, 0) + v
        return AffineExpr(coeffs, self.constant)

    def evaluate(self, env: Mapping[str, int]) -> int:
        total = self.constant
        for k, v in self._terms:
            total += v * env[k]
        return total

    def content(self) -> int:
        """gcd of the variable coefficients (0 for a constant)."""
        return reduce(gcd, (abs(v) for _, v in self._terms), 0)

    def __repr__(self) -> str:
        return f"AffineExpr({format_expr(self)!r})"

    def __str__(self) -> str:
        return format_expr(self)


def format_expr(e: AffineExpr, order: Iterable[str] | None = None) -> str:
    terms = list(e.terms)
    if order is not None:
        rank = {n: i for i, n in enumerate(order)}
        terms.sort(key=lambda t: (rank.get(t[0], len(rank)), t[0]))
    parts: list[str] = []
    for name, c in terms:
        mag = abs(c)
        body = name if mag == 1 else f"{mag}{name}"
        if not parts:
            parts.append(body if c > 0 else f"-{body}")
        else:
            parts.append(f"+ {body}" if c > 0 else f"- {body}")
    if e.constant or not parts:
        c = e.constant
        if not parts:
            parts.append(str(c))
        else:
            parts.append(f"+ {c}" if c > 0 else f"- {-c}")
    return " ".join(parts)


class Kind(enum.Enum):
    NON_NEGATIVE = ">="
    EQUALS_ZERO = "="


class Constraint:
    """``expr >= 0`` or ``expr == 0``."""

    __slots__ = ("expr", "kind")

    def __init__(self, expr: AffineExpr, kind: Kind = Kind.NON_NEGATIVE):
        self.expr = expr
        self.kind = kind

    @property
    def is_eq(self) -> bool:
        return self.kind is Kind.EQUALS_ZERO

    def names(self) -> set[str]:
        return self.expr.names()

    def holds(self, env: Mapping[str, int]) -> bool:
        v = self.expr.evaluate(env)
        return v == 0 if self.is_eq else v >= 0

    def rename(self, mapping: Mapping[str, str]) -> "Constraint":
        return Constraint(self.expr.rename(mapping), self.kind)

    def substitute(self, mapping: Mapping[str, ExprLike]) -> "Constraint":
        return Constraint(self.expr.substitute(mapping), self.kind)

    def negations(self) -> list["Constraint"]:
        """Integer complement, as a list of alternatives."""
        if self.is_eq:
            return [Constraint(self.expr - 1), Constraint(-self.expr - 1)]
        return [Constraint(-self.expr - 1)]

    def _key(self):
        return (self.kind.value, self.expr.terms, self.expr.constant)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Constraint) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __repr__(self) -> str:
        return f"Constraint({format_expr(self.expr)} {self.kind.value} 0)"


class ProvenInfeasible:
    """Marker returned when a constraint has no integer solution."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "PROVEN_INFEASIBLE"

    def __bool__(self) -> bool:
        return False


PROVEN_INFEASIBLE = ProvenInfeasible()


def gcd_normalize(c: Constraint) -> Constraint | ProvenInfeasible:
    """Divide through by the coefficient gcd, tightening inequalities.

    ``g*e + k == 0`` is infeasible unless ``g | k``; ``g*e + k >= 0`` becomes
    ``e + floor(k/g) >= 0``, which keeps exactly the same integer points.
    """
    e = c.expr
    g = e.content()
    if g == 0:
        ok = e.constant == 0 if c.is_eq else e.constant >= 0
        return c if ok else PROVEN_INFEASIBLE
    if c.is_eq:
        if e.constant % g:
            return PROVEN_INFEASIBLE
        if g == 1:
            return c
        return Constraint(AffineExpr({k: v // g for k, v in e.terms}, e.constant // g), c.kind)
    if g == 1:
        return c
    return Constraint(AffineExpr({k: v // g for k, v in e.terms}, e.constant // g), c.kind)


def is_tautology(c: Constraint) -> bool:
    e = c.expr
    if e.terms:
        return False
    return e.constant == 0 if c.is_eq else e.constant >= 0


def _lift2(a: ExprLike, b: ExprLike) -> AffineExpr:
    return AffineExpr.lift(a) - AffineExpr.lift(b)


def ge(a: ExprLike, b: ExprLike = 0) -> Constraint:
    return Constraint(_lift2(a, b))


def le(a: ExprLike, b: ExprLike = 0) -> Constraint:
    return Constraint(_lift2(b, a))


def gt(a: ExprLike, b: ExprLike = 0) -> Constraint:
    return Constraint(_lift2(a, b) - 1)


def lt(a: ExprLike, b: ExprLike = 0) -> Constraint:
    return Constraint(_lift2(b, a) - 1)


def eq(a: ExprLike, b: ExprLike = 0) -> Constraint:
    return Constraint(_lift2(a, b), Kind.EQUALS_ZERO)
