"""Fourier-Motzkin elimination with integer tightening and bounded witness search.

Constraints are handled internally as ``(terms, const)`` pairs meaning
``sum(c*v for v, c in terms) + const >= 0`` with ``terms`` a sorted tuple.
Every derived inequality is divided by its coefficient gcd and its constant
floored, which is sound for integer-valued variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Iterable, Mapping, Sequence

from .affine import AffineExpr, Constraint

Ineq = tuple  # (terms, const)

FM_CONSTRAINT_LIMIT = 4000


class FMOverflow(Exception):
    """Elimination produced more constraints than the configured limit."""


def _tighten(coeffs: Mapping[str, int], const: int) -> Ineq | bool:
    """Normalize one inequality. True = tautology, False = contradiction."""
    terms = tuple(sorted((k, v) for k, v in coeffs.items() if v))
    if not terms:
        return True if const >= 0 else False
    g = 0
    for _, v in terms:
        g = gcd(g, v)
        if g == 1:
            break
    if g > 1:
        terms = tuple((k, v // g) for k, v in terms)
        const = const // g
    return (terms, const)


class _System:
    """A conjunction of inequalities keyed by coefficient vector."""

    __slots__ = ("rows", "infeasible")

    def __init__(self):
        self.rows: dict[tuple, int] = {}
        self.infeasible = False

    def add(self, coeffs: Mapping[str, int], const: int) -> None:
        r = _tighten(coeffs, const)
        if r is True:
            return
        if r is False:
            self.infeasible = True
            return
        terms, c = r
        old = self.rows.get(terms)
        if old is None or c < old:
            self.rows[terms] = c
        neg = tuple((k, -v) for k, v in terms)
        opp = self.rows.get(neg)
        if opp is not None and c + opp < 0:
            self.infeasible = True

    def items(self):
        return self.rows.items()

    def __len__(self):
        return len(self.rows)


def _split_equalities(constraints: Iterable[Constraint]):
    eqs, ineqs = [], []
    for c in constraints:
        (eqs if c.is_eq else ineqs).append(c)
    return eqs, ineqs


def _gcd_terms(terms) -> int:
    g = 0
    for _, v in terms:
        g = gcd(g, v)
    return g


def eliminate_equalities(
    constraints: Sequence[Constraint], protected: Iterable[str] = ()
) -> tuple[list[Constraint], dict[str, AffineExpr]] | None:
    """Substitute away variables fixed by unit-coefficient equalities.

    Returns the remaining constraints and the substitution used (variable ->
    expression in the remaining variables), or None when a gcd test proves the
    system has no integer solution. Variables in ``protected`` are never
    chosen as the substituted variable.
    """
    protected = set(protected)
    subst: dict[str, AffineExpr] = {}
    work = list(constraints)
    changed = True
    while changed:
        changed = False
        for idx, c in enumerate(work):
            if not c.is_eq:
                continue
            e = c.expr
            if not e.terms:
                if e.constant != 0:
                    return None
                continue
            g = e.content()
            if e.constant % g:
                return None
            pick = None
            for name, coef in e.terms:
                if abs(coef) == 1 and name not in protected:
                    pick = (name, coef)
                    break
            if pick is None:
                continue
            name, coef = pick
            # coef*name + rest == 0  =>  name = -coef*rest
            rest = e - AffineExpr.var(name, coef)
            value = rest * (-coef)
            for k in list(subst):
                subst[k] = subst[k].substitute({name: value})
            subst[name] = value
            work = [w.substitute({name: value}) for j, w in enumerate(work) if j != idx]
            changed = True
            break
    return work, subst


def _to_system(constraints: Iterable[Constraint]) -> _System:
    sys = _System()
    for c in constraints:
        d = dict(c.expr.terms)
        sys.add(d, c.expr.constant)
        if c.is_eq:
            sys.add({k: -v for k, v in d.items()}, -c.expr.constant)
        if sys.infeasible:
            break
    return sys


def _eliminate(sys: _System, var: str, limit: int) -> _System:
    lower, upper, rest = [], [], []
    for terms, c in sys.items():
        coef = 0
        for k, v in terms:
            if k == var:
                coef = v
                break
        if coef > 0:
            lower.append((terms, c, coef))
        elif coef < 0:
            upper.append((terms, c, coef))
        else:
            rest.append((terms, c))
    out = _System()
    for terms, c in rest:
        out.rows[terms] = c
    if len(rest) + len(lower) * len(upper) > limit:
        raise FMOverflow(var)
    for lt, lc, la in lower:
        ld = dict(lt)
        for ut, uc, ua in upper:
            # la*x + L >= 0 and ua*x + U >= 0 with la > 0 > ua
            m1, m2 = -ua, la
            coeffs: dict[str, int] = {}
            for k, v in ld.items():
                if k != var:
                    coeffs[k] = coeffs.get(k, 0) + m1 * v
            for k, v in ut:
                if k != var:
                    coeffs[k] = coeffs.get(k, 0) + m2 * v
            out.add(coeffs, m1 * lc + m2 * uc)
            if out.infeasible:
                return out
    return out


def _pick_var(sys: _System, candidates: set[str]) -> str:
    counts: dict[str, list[int]] = {v: [0, 0] for v in candidates}
    for terms, _ in sys.items():
        for k, v in terms:
            if k in counts:
                counts[k][0 if v > 0 else 1] += 1
    return min(sorted(counts), key=lambda v: counts[v][0] * counts[v][1] - counts[v][0] - counts[v][1])


def fm_infeasible(constraints: Sequence[Constraint], limit: int = FM_CONSTRAINT_LIMIT) -> bool:
    """True when the conjunction is proven to have no integer point.

    Uses equality substitution, gcd tests and Fourier-Motzkin with integer
    tightening; a False answer means "not proven", never "feasible".
    """
    res = eliminate_equalities(constraints)
    if res is None:
        return True
    remaining, _ = res
    sys = _to_system(remaining)
    if sys.infeasible:
        return True
    pending = set()
    for terms, _ in sys.items():
        pending.update(k for k, _ in terms)
    try:
        while pending and not sys.infeasible:
            var = _pick_var(sys, pending)
            sys = _eliminate(sys, var, limit)
            pending.discard(var)
    except FMOverflow:
        return False
    return sys.infeasible


def fm_project(
    constraints: Sequence[Constraint], var: str, limit: int = FM_CONSTRAINT_LIMIT
) -> list[Constraint] | None:
    """Rational shadow (integer-tightened) of eliminating ``var``; None if empty."""
    sys = _to_system(constraints)
    if sys.infeasible:
        return None
    sys = _eliminate(sys, var, limit)
    if sys.infeasible:
        return None
    return [Constraint(AffineExpr(dict(t), c)) for t, c in sys.items()]


# -- witness search -----------------------------------------------------------


@dataclass
class SearchOutcome:
    point: dict[str, int] | None
    exhaustive: bool
    reason: str = ""
    box: dict[str, tuple[int, int]] = field(default_factory=dict)


class _Level:
    __slots__ = ("var", "lower", "upper")

    def __init__(self, var: str):
        self.var = var
        self.lower: list[tuple[int, tuple, int]] = []  # coef>0: coef*x + rest >= 0
        self.upper: list[tuple[int, tuple, int]] = []


def _bounds(level: _Level, env: Mapping[str, int]) -> tuple[int | None, int | None]:
    lo = hi = None
    for coef, rest, const in level.lower:
        s = const
        for k, v in rest:
            s += v * env[k]
        # coef*x >= -s  => x >= ceil(-s/coef)
        b = -((s) // coef)
        if lo is None or b > lo:
            lo = b
    for coef, rest, const in level.upper:
        s = const
        for k, v in rest:
            s += v * env[k]
        # coef*x + s >= 0 with coef < 0 => x <= floor(s/-coef)
        b = s // (-coef)
        if hi is None or b < hi:
            hi = b
    return lo, hi


def search_witness(
    constraints: Sequence[Constraint],
    order: Sequence[str],
    candidates: Mapping[str, Sequence[int]] | None = None,
    box: int = 16,
    node_budget: int = 200_000,
    limit: int = FM_CONSTRAINT_LIMIT,
) -> SearchOutcome:
    """Look for an integer point by branching over a projection chain.

    Variables are fixed in ``order``; each level's range comes from the
    Fourier-Motzkin shadow of the variables after it, so a prefix that cannot
    be extended is cut early. Variables listed in ``candidates`` only take the
    listed values; any other unbounded variable is clipped to ``[-box, box]``.
    The outcome is exhaustive when neither restriction removed a value that
    the shadow allowed, in which case ``point is None`` proves emptiness.
    """
    candidates = dict(candidates or {})
    res = eliminate_equalities(constraints, protected=candidates)
    if res is None:
        return SearchOutcome(None, True, "gcd test")
    remaining, subst = res
    live = [v for v in order if v not in subst]
    used = set()
    for c in remaining:
        used |= c.names()
    for v in used:
        if v not in live:
            live.append(v)
    sys = _to_system(remaining)
    if sys.infeasible:
        return SearchOutcome(None, True, "contradiction")

    levels: list[_Level] = []
    try:
        for var in reversed(live):
            lvl = _Level(var)
            for terms, c in sys.items():
                coef = 0
                rest = []
                for k, v in terms:
                    if k == var:
                        coef = v
                    else:
                        rest.append((k, v))
                if coef > 0:
                    lvl.lower.append((coef, tuple(rest), c))
                elif coef < 0:
                    lvl.upper.append((coef, tuple(rest), c))
            levels.append(lvl)
            sys = _eliminate(sys, var, limit)
            if sys.infeasible:
                return SearchOutcome(None, True, "rational infeasibility")
    except FMOverflow:
        return SearchOutcome(None, False, "projection exceeded constraint limit")
    levels.reverse()

    state = {"nodes": 0, "exhaustive": True}
    used_box: dict[str, tuple[int, int]] = {}
    env: dict[str, int] = {}

    def values(i: int):
        lvl = levels[i]
        lo, hi = _bounds(lvl, env)
        if lvl.var in candidates:
            vals = [v for v in candidates[lvl.var] if (lo is None or v >= lo) and (hi is None or v <= hi)]
            if lo is None or hi is None or hi - lo + 1 > len(set(vals)):
                state["exhaustive"] = False
            return vals
        if lo is None or hi is None:
            state["exhaustive"] = False
            clo = -box if lo is None else lo
            chi = box if hi is None else hi
            if lo is not None and lo > box:
                chi = lo + 2 * box
            if hi is not None and hi < -box:
                clo = hi - 2 * box
            lo, hi = clo, chi
            old = used_box.get(lvl.var)
            used_box[lvl.var] = (lo, hi) if old is None else (min(old[0], lo), max(old[1], hi))
        return range(lo, hi + 1)

    def rec(i: int) -> bool:
        if i == len(levels):
            return True
        for v in values(i):
            state["nodes"] += 1
            if state["nodes"] > node_budget:
                raise _Budget
            env[levels[i].var] = v
            if rec(i + 1):
                return True
        env.pop(levels[i].var, None)
        return False

    try:
        found = rec(0)
    except _Budget:
        return SearchOutcome(None, False, "search budget exhausted", used_box)
    if not found:
        return SearchOutcome(None, state["exhaustive"], "no integer point in search region", used_box)
    point = dict(env)
    for name, expr in subst.items():
        point[name] = expr.evaluate(point) if expr.names() <= point.keys() else _fill(expr, point)
    for name in order:
        point.setdefault(name, 0)
    for name, expr in subst.items():
        point[name] = expr.evaluate(point)
    return SearchOutcome(point, state["exhaustive"], "", used_box)


def _fill(expr: AffineExpr, point: dict[str, int]) -> int:
    for n in expr.names():
        point.setdefault(n, 0)
    return expr.evaluate(point)


class _Budget(Exception):
    pass
