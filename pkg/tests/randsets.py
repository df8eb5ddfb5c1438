"""Seeded random integer sets and relations for property checks.

Every set is boxed inside [-10, 10] on each dimension, so enumeration over
that box sees all of its points.
"""

from __future__ import annotations

import random

from raceset.isetcore import AffineExpr, Conjunct, Constraint, IntRel, IntSet, Kind

BOUND = 10


def _expr(rng: random.Random, names) -> AffineExpr:
    coeffs = {n: rng.randint(-3, 3) for n in names}
    return AffineExpr(coeffs, rng.randint(-BOUND, BOUND))


def _conjunct(rng: random.Random, dims) -> Conjunct:
    cons = []
    for d in dims:
        lo = rng.randint(-BOUND, BOUND - 2)
        hi = rng.randint(lo, BOUND)
        cons += [Constraint(AffineExpr.var(d) - lo), Constraint(AffineExpr.const(hi) - AffineExpr.var(d))]
    for _ in range(rng.randint(0, 2)):
        kind = Kind.EQUALS_ZERO if rng.random() < 0.15 else Kind.NON_NEGATIVE
        cons.append(Constraint(_expr(rng, dims), kind))
    exists = ()
    if rng.random() < 0.25:
        # divisibility through an existential: d = k*e + r
        d = rng.choice(list(dims))
        k = rng.randint(2, 3)
        cons.append(Constraint(AffineExpr.var(d) - AffineExpr.var("e", k) - rng.randint(0, k - 1), Kind.EQUALS_ZERO))
        exists = ("e",)
    return Conjunct(cons, exists)


def random_set(rng: random.Random, ndims: int | None = None, space: str = "S") -> IntSet:
    n = ndims if ndims is not None else rng.randint(1, 3)
    dims = ["x", "y", "z"][:n]
    parts = [_conjunct(rng, dims) for _ in range(rng.randint(1, 2))]
    return IntSet(space, dims, parts)


def random_rel(rng: random.Random, n_in: int = 1, n_out: int = 1, in_space: str = "A",
               out_space: str = "B", in_names=("a", "b"), out_names=("c", "d")) -> IntRel:
    ins, outs = list(in_names[:n_in]), list(out_names[:n_out])
    parts = [_conjunct(rng, ins + outs) for _ in range(rng.randint(1, 2))]
    return IntRel(in_space, ins, out_space, outs, parts)


def box_for(s) -> dict[str, tuple[int, int]]:
    return {d: (-BOUND, BOUND) for d in s.dims}


def _pts(s) -> set[tuple[int, ...]]:
    from raceset.oracle import enumerate_set
    return enumerate_set(s, box_for(s))


def check_case(rng: random.Random) -> list[str]:
    """Run every algebra operation on one random draw; return the mismatches."""
    from raceset.isetcore import Verdict, compose, intersect, inverse, is_empty, project_out, subtract, union

    bad = []
    n = rng.randint(1, 3)
    a, b = random_set(rng, n), random_set(rng, n)
    pa, pb = _pts(a), _pts(b)
    checks = {
        "intersect": (intersect(a, b), pa & pb),
        "union": (union(a, b), pa | pb),
        "subtract": (subtract(a, b), pa - pb),
    }
    if n > 1:
        drop = rng.choice(a.dims)
        k = a.dims.index(drop)
        checks["project_out"] = (project_out(a, [drop]), {p[:k] + p[k + 1:] for p in pa})
    for name, (got, want) in checks.items():
        if _pts(got) != want:
            bad.append(f"{name}: {a} / {b}")
    for s, pts in ((a, pa), (intersect(a, b), pa & pb)):
        v = is_empty(s, box=BOUND)
        if v.status is Verdict.INCONCLUSIVE:
            bad.append(f"is_empty inconclusive on bounded {s}")
        elif v.status is Verdict.EMPTY and pts:
            bad.append(f"is_empty unsound on {s}")
        elif v.status is Verdict.NONEMPTY and not pts:
            bad.append(f"is_empty claims a point in empty {s}")

    r1 = random_rel(rng, 1, 1, "A", "B")
    r2 = random_rel(rng, 1, rng.randint(1, 2), "B", "C", in_names=("p", "q"), out_names=("u", "v"))
    p1, p2 = _pts(r1), _pts(r2)
    if _pts(inverse(r1)) != {(y, x) for x, y in p1}:
        bad.append(f"inverse: {r1}")
    want = {(x,) + t[1:] for (x, y) in p1 for t in p2 if t[0] == y}
    if _pts(compose(r1, r2)) != want:
        bad.append(f"compose: {r1} ; {r2}")
    return bad
