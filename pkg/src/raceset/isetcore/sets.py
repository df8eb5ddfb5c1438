"""Parameterized integer sets and relations in disjunctive normal form."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .affine import (
    PROVEN_INFEASIBLE,
    AffineExpr,
    Constraint,
    Kind,
    eq,
    gcd_normalize,
    is_tautology,
    lt,
)
from .solve import FMOverflow, eliminate_equalities, fm_infeasible, fm_project, search_witness

MAX_DISJUNCTS = 4096
DEFAULT_PARAM_SAMPLES = (0, 1, 2, 4, 8)


class SpaceMismatch(ValueError):
    pass


class ArityMismatch(ValueError):
    pass


class DisjunctLimitExceeded(RuntimeError):
    pass


class InexactOperation(RuntimeError):
    """Raised when an exact result would need quantifier elimination."""


class Conjunct:
    """A conjunction of constraints, optionally with existential variables."""

    __slots__ = ("constraints", "exists", "_key")

    def __init__(self, constraints: Iterable[Constraint] = (), exists: Iterable[str] = ()):
        self.constraints = tuple(constraints)
        self.exists = tuple(exists)
        self._key = None

    def names(self) -> set[str]:
        out: set[str] = set()
        for c in self.constraints:
            out |= c.names()
        return out

    def rename(self, mapping: Mapping[str, str]) -> "Conjunct":
        return Conjunct(
            (c.rename(mapping) for c in self.constraints),
            (mapping.get(e, e) for e in self.exists),
        )

    def key(self):
        if self._key is None:
            self._key = (frozenset(self.constraints), self.exists)
        return self._key

    def __eq__(self, other):
        return isinstance(other, Conjunct) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        ex = f" exists {list(self.exists)}" if self.exists else ""
        return f"Conjunct({list(self.constraints)}{ex})"


def _fresh(base: str, taken: set[str]) -> str:
    i = 0
    while f"{base}{i}" in taken:
        i += 1
    name = f"{base}{i}"
    taken.add(name)
    return name


def simplify_conjunct(conj: Conjunct, visible: Iterable[str]) -> Conjunct | None:
    """Canonicalize one conjunct; None when it is trivially infeasible.

    Performs gcd normalization, removes duplicates and dominated parallel
    inequalities, detects opposite-bound contradictions, turns matched
    opposite inequalities into equalities and substitutes away existentials
    fixed by unit-coefficient equalities. Existentials are renamed
    canonically (``e0``, ``e1`` ... avoiding visible names).
    """
    visible = set(visible)
    exists = list(conj.exists)
    constraints = list(conj.constraints)
    if exists:
        ex_set = set(exists)
        res = eliminate_equalities(constraints, protected=visible)
        if res is None:
            return None
        constraints, subst = res
        # eliminate_equalities only substitutes non-protected (existential) vars
        exists = [e for e in exists if e not in subst]
        extra = [eq(AffineExpr.var(k), v) for k, v in subst.items() if k not in ex_set]
        constraints = extra + constraints
    ineqs: dict[tuple, int] = {}
    eqs: dict[tuple, Constraint] = {}
    for c in constraints:
        n = gcd_normalize(c)
        if n is PROVEN_INFEASIBLE:
            return None
        if is_tautology(n):
            continue
        e = n.expr
        if n.is_eq:
            # canonical sign: first coefficient positive
            if e.terms[0][1] < 0:
                e = -e
            key = e.terms
            prev = eqs.get(key)
            if prev is not None and prev.expr.constant != e.constant:
                return None
            eqs[key] = Constraint(e, Kind.EQUALS_ZERO)
        else:
            key = e.terms
            if key not in ineqs or e.constant < ineqs[key]:
                ineqs[key] = e.constant
    # opposite pairs
    for key, c in list(ineqs.items()):
        if key not in ineqs:
            continue
        neg = tuple((k, -v) for k, v in key)
        if neg in ineqs:
            s = c + ineqs[neg]
            if s < 0:
                return None
            if s == 0:
                e = AffineExpr(dict(key), c)
                if e.terms[0][1] < 0:
                    e = -e
                prev = eqs.get(e.terms)
                if prev is not None and prev.expr.constant != e.constant:
                    return None
                eqs[e.terms] = Constraint(e, Kind.EQUALS_ZERO)
                del ineqs[key]
                del ineqs[neg]
    # inequalities implied by equalities with the same direction
    for key, ce in eqs.items():
        const = ce.expr.constant
        neg = tuple((k, -v) for k, v in key)
        if key in ineqs:
            if ineqs[key] < const:
                return None
            del ineqs[key]
        if neg in ineqs:
            if ineqs[neg] < -const:
                return None
            del ineqs[neg]
    out = list(eqs.values()) + [Constraint(AffineExpr(dict(k), c)) for k, c in ineqs.items()]
    out.sort(key=lambda c: (not c.is_eq, c.expr.terms, c.expr.constant))
    used = set()
    for c in out:
        used |= c.names()
    exists = [e for e in exists if e in used]
    mapping = {}
    taken = set(visible)
    for e in exists:
        mapping[e] = _fresh("e", taken)
    conj = Conjunct(out, exists)
    if any(k != v for k, v in mapping.items()):
        conj = _safe_rename(conj, mapping)
    return conj


def _safe_rename(conj: Conjunct, mapping: Mapping[str, str]) -> Conjunct:
    # two-step rename to avoid capture when targets overlap sources
    tmp = {k: f"\x00{i}" for i, k in enumerate(mapping)}
    back = {f"\x00{i}": mapping[k] for i, k in enumerate(mapping)}
    return conj.rename(tmp).rename(back)


def merge_conjuncts(a: Conjunct, b: Conjunct, visible: Iterable[str]) -> Conjunct:
    visible = set(visible)
    clash = [e for e in a.exists if e in visible or (e in b.names() and e not in b.exists)]
    if clash:
        taken = visible | a.names() | b.names() | set(b.exists)
        a = _safe_rename(a, {e: _fresh("x", taken) for e in clash})
    taken = visible | set(a.exists) | a.names()
    mapping = {}
    for e in b.exists:
        if e in taken:
            mapping[e] = _fresh("x", taken)
        else:
            taken.add(e)
    if mapping:
        b = _safe_rename(b, mapping)
    return Conjunct(a.constraints + b.constraints, a.exists + b.exists)


class Verdict(enum.Enum):
    EMPTY = "Empty"
    NONEMPTY = "NonEmpty"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class WitnessPoint:
    space: str
    dim_values: dict[str, int]
    param_values: dict[str, int]
    exist_values: dict[str, int] = field(default_factory=dict)

    def env(self) -> dict[str, int]:
        return {**self.param_values, **self.dim_values, **self.exist_values}


@dataclass(frozen=True)
class EmptinessVerdict:
    status: Verdict
    witness: WitnessPoint | None = None
    reason: str = ""
    box: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return self.status is Verdict.EMPTY

    @property
    def is_nonempty(self) -> bool:
        return self.status is Verdict.NONEMPTY

    @property
    def is_inconclusive(self) -> bool:
        return self.status is Verdict.INCONCLUSIVE


class _Poly:
    """Shared machinery for sets and relations: a tuple of named dims."""

    dims: tuple[str, ...]
    params: tuple[str, ...]
    disjuncts: tuple[Conjunct, ...]

    def _init_common(self, dims, params, disjuncts, simplify=True):
        dims = tuple(dims)
        if len(set(dims)) != len(dims):
            raise ValueError(f"duplicate dimension names in {dims}")
        params = set(params)
        for d in disjuncts:
            params |= d.names() - set(dims) - set(d.exists)
        if params & set(dims):
            raise ValueError(f"names used both as dimension and parameter: {sorted(params & set(dims))}")
        self.dims = dims
        self.params = tuple(sorted(params))
        visible = set(dims) | params
        out = []
        seen = set()
        for d in disjuncts:
            bad = d.names() - visible - set(d.exists)
            if bad:
                raise ValueError(f"constraint references undeclared names {sorted(bad)}")
            if simplify:
                d = simplify_conjunct(d, visible)
                if d is None:
                    continue
            if d.key() in seen:
                continue
            seen.add(d.key())
            out.append(d)
        if len(out) > MAX_DISJUNCTS:
            raise DisjunctLimitExceeded(f"{len(out)} disjuncts exceed the cap of {MAX_DISJUNCTS}")
        # a universe disjunct absorbs all others
        if any(not d.constraints for d in out):
            out = [Conjunct()]
        self.disjuncts = tuple(out)

    @property
    def visible(self) -> set[str]:
        return set(self.dims) | set(self.params)

    def is_obviously_empty(self) -> bool:
        return not self.disjuncts

    def _replace(self, disjuncts, params=None):
        raise NotImplementedError

    def _renamed_dims(self, new_dims: Sequence[str]) -> tuple[Conjunct, ...]:
        mapping = {o: n for o, n in zip(self.dims, new_dims) if o != n}
        if not mapping:
            return self.disjuncts
        clash = (set(new_dims) - set(self.dims)) & set(self.params)
        if clash:
            raise SpaceMismatch(f"dimension names {sorted(clash)} collide with parameters")
        out = []
        for d in self.disjuncts:
            taken = set(new_dims) | set(self.dims) | set(self.params)
            ex_map = {}
            for e in d.exists:
                if e in mapping.values():
                    ex_map[e] = _fresh("x", taken)
            if ex_map:
                d = _safe_rename(d, ex_map)
            out.append(_safe_rename(d, mapping))
        return tuple(out)

    def prune(self) -> "_Poly":
        """Drop disjuncts that Fourier-Motzkin proves empty."""
        keep = [d for d in self.disjuncts if not fm_infeasible(d.constraints)]
        if len(keep) == len(self.disjuncts):
            return self
        return self._replace(keep)

    def contains(self, point: Sequence[int] | Mapping[str, int], params: Mapping[str, int] | None = None) -> bool:
        if isinstance(point, Mapping):
            env = {d: int(point[d]) for d in self.dims}
        else:
            if len(point) != len(self.dims):
                raise ArityMismatch(f"point of arity {len(point)} for {len(self.dims)} dims")
            env = {d: int(v) for d, v in zip(self.dims, point)}
        params = params or {}
        for p in self.params:
            if p not in params:
                raise KeyError(f"missing value for parameter {p!r}")
            env[p] = int(params[p])
        for d in self.disjuncts:
            if not d.exists:
                if all(c.holds(env) for c in d.constraints):
                    return True
                continue
            residual = [c.substitute(env) for c in d.constraints]
            out = search_witness(residual, list(d.exists), box=64)
            if out.point is not None:
                return True
            if not out.exhaustive:
                raise InexactOperation("existential membership undecided: unbounded existential")
        return False


class IntSet(_Poly):
    """``{ space[dims] : disjunct_1 or disjunct_2 ... }`` over parameters."""

    def __init__(self, space: str, dims: Sequence[str], disjuncts: Iterable[Conjunct] = (),
                 params: Iterable[str] = (), simplify: bool = True):
        self.space = space
        self._init_common(dims, params, tuple(disjuncts), simplify)

    @classmethod
    def universe(cls, space: str, dims: Sequence[str], params: Iterable[str] = ()) -> "IntSet":
        return cls(space, dims, [Conjunct()], params)

    @classmethod
    def empty(cls, space: str, dims: Sequence[str], params: Iterable[str] = ()) -> "IntSet":
        return cls(space, dims, [], params)

    @classmethod
    def from_constraints(cls, space: str, dims: Sequence[str], constraints: Iterable[Constraint],
                         params: Iterable[str] = (), exists: Iterable[str] = ()) -> "IntSet":
        return cls(space, dims, [Conjunct(constraints, exists)], params)

    def _replace(self, disjuncts, params=None):
        return IntSet(self.space, self.dims, disjuncts, self.params if params is None else params)

    def rename_dims(self, new_dims: Sequence[str]) -> "IntSet":
        if len(new_dims) != len(self.dims):
            raise ArityMismatch("rename arity differs")
        return IntSet(self.space, new_dims, self._renamed_dims(new_dims), self.params)

    def with_space(self, space: str) -> "IntSet":
        return IntSet(self.space if space is None else space, self.dims, self.disjuncts, self.params)

    @property
    def arity(self) -> int:
        return len(self.dims)

    def __repr__(self):
        from ..notation import format_set
        return f"IntSet({format_set(self)!r})"


class IntRel(_Poly):
    """``{ in_space[in_dims] -> out_space[out_dims] : ... }``."""

    def __init__(self, in_space: str, in_dims: Sequence[str], out_space: str, out_dims: Sequence[str],
                 disjuncts: Iterable[Conjunct] = (), params: Iterable[str] = (), simplify: bool = True):
        self.in_space = in_space
        self.out_space = out_space
        self.in_dims = tuple(in_dims)
        self.out_dims = tuple(out_dims)
        if set(self.in_dims) & set(self.out_dims):
            raise ValueError("input and output dimension names must be disjoint")
        self._init_common(self.in_dims + self.out_dims, params, tuple(disjuncts), simplify)

    @classmethod
    def universe(cls, in_space, in_dims, out_space, out_dims, params=()) -> "IntRel":
        return cls(in_space, in_dims, out_space, out_dims, [Conjunct()], params)

    @classmethod
    def empty(cls, in_space, in_dims, out_space, out_dims, params=()) -> "IntRel":
        return cls(in_space, in_dims, out_space, out_dims, [], params)

    @classmethod
    def from_constraints(cls, in_space, in_dims, out_space, out_dims, constraints, params=(), exists=()):
        return cls(in_space, in_dims, out_space, out_dims, [Conjunct(constraints, exists)], params)

    @classmethod
    def from_map(cls, in_space: str, in_dims: Sequence[str], out_space: str,
                 exprs: Sequence[AffineExpr], out_dims: Sequence[str] | None = None,
                 params: Iterable[str] = ()) -> "IntRel":
        """Single-valued affine map ``in[dims] -> out[exprs]``."""
        if out_dims is None:
            out_dims = fresh_names(len(exprs), set(in_dims) | set(params) | _names_of(exprs), "o")
        cons = [eq(AffineExpr.var(o), e) for o, e in zip(out_dims, exprs)]
        return cls(in_space, in_dims, out_space, out_dims, [Conjunct(cons)], params)

    def _replace(self, disjuncts, params=None):
        return IntRel(self.in_space, self.in_dims, self.out_space, self.out_dims, disjuncts,
                      self.params if params is None else params)

    def rename_dims(self, in_dims: Sequence[str], out_dims: Sequence[str]) -> "IntRel":
        new = tuple(in_dims) + tuple(out_dims)
        if len(new) != len(self.dims):
            raise ArityMismatch("rename arity differs")
        return IntRel(self.in_space, in_dims, self.out_space, out_dims, self._renamed_dims(new), self.params)

    def as_set(self, space: str = "") -> IntSet:
        return IntSet(space, self.dims, self.disjuncts, self.params, simplify=False)

    def domain(self) -> IntSet:
        s = IntSet(self.in_space, self.dims, self.disjuncts, self.params, simplify=False)
        return project_out(s, self.out_dims)

    def range(self) -> IntSet:
        s = IntSet(self.out_space, self.dims, self.disjuncts, self.params, simplify=False)
        return project_out(s, self.in_dims)

    def image_of(self, point: Mapping[str, int], params: Mapping[str, int]) -> list[dict[str, int]]:
        """One output point per disjunct related to ``point``, searched within a box of 64."""
        env = {**params, **{d: point[d] for d in self.in_dims}}
        out = []
        for d in self.disjuncts:
            residual = [c.substitute(env) for c in d.constraints]
            res = search_witness(residual, list(self.out_dims) + list(d.exists), box=64)
            if res.point is not None:
                img = {o: res.point[o] for o in self.out_dims}
                if img not in out:
                    out.append(img)
        return out

    def __repr__(self):
        from ..notation import format_rel
        return f"IntRel({format_rel(self)!r})"


def _names_of(exprs) -> set[str]:
    out = set()
    for e in exprs:
        out |= AffineExpr.lift(e).names()
    return out


def fresh_names(n: int, taken: set[str], base: str) -> tuple[str, ...]:
    taken = set(taken)
    return tuple(_fresh(base, taken) for _ in range(n))


# -- keyed unions ----------------------------------------------------------------


class UnionSet:
    """A collection of IntSets keyed by space label."""

    def __init__(self, parts: Iterable[IntSet] = ()):
        self.parts: dict[str, IntSet] = {}
        for p in parts:
            self.add(p)

    def add(self, s: IntSet) -> None:
        if s.space in self.parts:
            self.parts[s.space] = union(self.parts[s.space], s)
        else:
            self.parts[s.space] = s

    def __getitem__(self, space: str) -> IntSet:
        return self.parts[space]

    def __contains__(self, space: str) -> bool:
        return space in self.parts

    def __iter__(self):
        return iter(self.parts.values())

    def __len__(self):
        return len(self.parts)

    def keys(self):
        return self.parts.keys()

    def contains(self, space: str, point, params=None) -> bool:
        return space in self.parts and self.parts[space].contains(point, params)

    @property
    def params(self) -> tuple[str, ...]:
        out = set()
        for p in self.parts.values():
            out |= set(p.params)
        return tuple(sorted(out))


class UnionRel:
    """A collection of IntRels keyed by (input space, output space)."""

    def __init__(self, parts: Iterable[IntRel] = ()):
        self.parts: dict[tuple[str, str], IntRel] = {}
        for p in parts:
            self.add(p)

    def add(self, r: IntRel) -> None:
        key = (r.in_space, r.out_space)
        if key in self.parts:
            self.parts[key] = union(self.parts[key], r)
        else:
            self.parts[key] = r

    def __getitem__(self, key: tuple[str, str]) -> IntRel:
        return self.parts[key]

    def __contains__(self, key) -> bool:
        return key in self.parts

    def __iter__(self):
        return iter(self.parts.values())

    def __len__(self):
        return len(self.parts)

    def keys(self):
        return self.parts.keys()

    @property
    def params(self) -> tuple[str, ...]:
        out = set()
        for p in self.parts.values():
            out |= set(p.params)
        return tuple(sorted(out))


# -- algebra -------------------------------------------------------------------


def _check_compatible(a: _Poly, b: _Poly) -> None:
    if type(a) is not type(b):
        raise SpaceMismatch(f"cannot combine {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, IntSet):
        if a.space != b.space or len(a.dims) != len(b.dims):
            raise SpaceMismatch(f"{a.space}[{len(a.dims)}] vs {b.space}[{len(b.dims)}]")
    else:
        if (a.in_space, a.out_space) != (b.in_space, b.out_space) or \
                (len(a.in_dims), len(a.out_dims)) != (len(b.in_dims), len(b.out_dims)):
            raise SpaceMismatch(
                f"{a.in_space}[{len(a.in_dims)}]->{a.out_space}[{len(a.out_dims)}] vs "
                f"{b.in_space}[{len(b.in_dims)}]->{b.out_space}[{len(b.out_dims)}]"
            )


def _aligned(a: _Poly, b: _Poly) -> tuple[Conjunct, ...]:
    if a.dims == b.dims:
        return b.disjuncts
    clash = set(a.dims) & set(b.params)
    if clash:
        raise SpaceMismatch(f"dimension names {sorted(clash)} are parameters of the other operand")
    return b._renamed_dims(a.dims)


def intersect(a, b, prune: bool = False):
    """Points in both operands (same space; b's dims renamed positionally)."""
    _check_compatible(a, b)
    bd = _aligned(a, b)
    params = set(a.params) | set(b.params)
    visible = set(a.dims) | params
    out = []
    for x in a.disjuncts:
        for y in bd:
            c = simplify_conjunct(merge_conjuncts(x, y, visible), visible)
            if c is None:
                continue
            if prune and fm_infeasible(c.constraints):
                continue
            out.append(c)
            if len(out) > MAX_DISJUNCTS:
                raise DisjunctLimitExceeded(f"intersection exceeds {MAX_DISJUNCTS} disjuncts")
    return a._replace(out, params)


def union(a, b):
    """Logical or; operands in different spaces give a keyed union."""
    if isinstance(a, (UnionSet, UnionRel)) or isinstance(b, (UnionSet, UnionRel)):
        cls = UnionSet if isinstance(a, (IntSet, UnionSet)) else UnionRel
        out = cls()
        for part in (a, b):
            for p in (part if isinstance(part, (UnionSet, UnionRel)) else [part]):
                out.add(p)
        return out
    try:
        _check_compatible(a, b)
    except SpaceMismatch:
        if type(a) is not type(b):
            raise
        return UnionSet([a, b]) if isinstance(a, IntSet) else UnionRel([a, b])
    bd = _aligned(a, b)
    return a._replace(a.disjuncts + tuple(bd), set(a.params) | set(b.params))


@dataclass(frozen=True)
class _Stride:
    """``expr`` is a multiple of ``modulus`` (an existential eliminated exactly)."""

    expr: AffineExpr
    modulus: int

    def holds_with(self, residue: int, taken: set[str]) -> Conjunct:
        e = _fresh("e", taken)
        c = Constraint(self.expr - residue - AffineExpr.var(e, self.modulus), Kind.EQUALS_ZERO)
        return Conjunct([c], (e,))


def _complement_atoms(d: Conjunct, visible: set[str]) -> list | None:
    """Existential-free constraints and strides equivalent to ``d``; None if infeasible."""
    if not d.exists:
        return list(d.constraints)
    d2 = simplify_conjunct(d, visible)
    if d2 is None:
        return None
    cons = list(d2.constraints)
    strides = []
    for e in d2.exists:
        users = [c for c in cons if c.expr.coeff(e)]
        others = [n for c in users for n in c.names() if n != e and n not in visible]
        if len(users) == 1 and users[0].is_eq and not others:
            c = users[0]
            k = c.expr.coeff(e)
            rest = c.expr - AffineExpr.var(e, k)
            strides.append(_Stride(rest if k > 0 else -rest, abs(k)))
            cons.remove(c)
            continue
        if not _fm_exact_for(cons, e):
            raise InexactOperation(f"cannot complement: existential {e} has non-unit coefficients")
        proj = fm_project(cons, e)
        if proj is None:
            return None
        cons = proj
    return cons + strides


def _fm_exact_for(constraints: Sequence[Constraint], var: str) -> bool:
    lowers, uppers = [], []
    for c in constraints:
        k = c.expr.coeff(var)
        if not k:
            continue
        if c.is_eq:
            return False
        (lowers if k > 0 else uppers).append(k)
    return all(k == 1 for k in lowers) or all(k == -1 for k in uppers)


def _complement(atoms: list, visible: set[str]) -> list[Conjunct]:
    """Disjoint integer complement of a conjunction of constraints and strides."""
    out = []
    prefix = Conjunct()
    taken = set(visible) | {n for a in atoms for n in (a.expr.names())}
    for a in atoms:
        if isinstance(a, _Stride):
            for r in range(1, a.modulus):
                out.append(merge_conjuncts(prefix, a.holds_with(r, taken), visible))
            prefix = merge_conjuncts(prefix, a.holds_with(0, taken), visible)
        else:
            for n in a.negations():
                out.append(merge_conjuncts(prefix, Conjunct([n]), visible))
            prefix = merge_conjuncts(prefix, Conjunct([a]), visible)
    return out


def subtract(a, b, prune: bool = True):
    """Points of ``a`` not in ``b``."""
    _check_compatible(a, b)
    bd = _aligned(a, b)
    params = set(a.params) | set(b.params)
    visible = set(a.dims) | params
    current = list(a.disjuncts)
    for y in bd:
        atoms = _complement_atoms(y, visible)
        if atoms is None:
            continue
        if not atoms:
            return a._replace([], params)
        comp = _complement(atoms, visible)
        nxt = []
        for x in current:
            for z in comp:
                c = simplify_conjunct(merge_conjuncts(x, z, visible), visible)
                if c is None:
                    continue
                if prune and fm_infeasible(c.constraints):
                    continue
                nxt.append(c)
                if len(nxt) > MAX_DISJUNCTS:
                    raise DisjunctLimitExceeded(f"subtraction exceeds {MAX_DISJUNCTS} disjuncts")
        current = nxt
        if not current:
            break
    return a._replace(current, params)


def inverse(r: IntRel) -> IntRel:
    return IntRel(r.out_space, r.out_dims, r.in_space, r.in_dims, r.disjuncts, r.params, simplify=False)


def compose(r1: IntRel, r2: IntRel) -> IntRel:
    """``r1`` followed by ``r2``: {a -> c : exists b, a r1 b and b r2 c}."""
    if r1.out_space != r2.in_space or len(r1.out_dims) != len(r2.in_dims):
        raise SpaceMismatch(
            f"cannot compose ...->{r1.out_space}[{len(r1.out_dims)}] with "
            f"{r2.in_space}[{len(r2.in_dims)}]->..."
        )
    params = set(r1.params) | set(r2.params)
    in_dims = list(r1.in_dims)
    taken = set(in_dims) | params
    out_dims = []
    for o in r2.out_dims:
        out_dims.append(o if o not in taken else _fresh(o.rstrip("0123456789") or "o", taken))
        taken.add(out_dims[-1])
    mids = [_fresh("m", taken) for _ in r1.out_dims]
    left = r1._renamed_dims(in_dims + mids)
    right = r2._renamed_dims(mids + out_dims)
    visible = set(in_dims) | set(out_dims) | params
    out = []
    shared = visible | set(mids)
    for x in left:
        for y in right:
            taken = shared | x.names() | y.names() | set(x.exists) | set(y.exists)
            xm = {e: _fresh("x", taken) for e in x.exists}
            ym = {e: _fresh("x", taken) for e in y.exists}
            xx = _safe_rename(x, xm) if xm else x
            yy = _safe_rename(y, ym) if ym else y
            merged = Conjunct(xx.constraints + yy.constraints, xx.exists + yy.exists + tuple(mids))
            c = simplify_conjunct(merged, visible)
            if c is None:
                continue
            out.append(_project_exact(c, visible))
            if len(out) > MAX_DISJUNCTS:
                raise DisjunctLimitExceeded(f"composition exceeds {MAX_DISJUNCTS} disjuncts")
    return IntRel(r1.in_space, in_dims, r2.out_space, out_dims, out, params)


apply_range = compose


def _project_exact(d: Conjunct, visible: set[str]) -> Conjunct:
    """Eliminate existentials where Fourier-Motzkin is exact; keep the rest."""
    cons = list(d.constraints)
    kept = []
    for e in d.exists:
        if any(c.expr.coeff(e) for c in cons) and _fm_exact_for(cons, e):
            proj = fm_project(cons, e)
            if proj is None:
                return Conjunct([Constraint(AffineExpr.const(-1))])
            cons = proj
        elif any(c.expr.coeff(e) for c in cons):
            kept.append(e)
    return Conjunct(cons, kept)


def project_out(s: IntSet, dims: Iterable[str]) -> IntSet:
    """Existentially quantify ``dims``.

    Equalities with a unit coefficient are substituted and Fourier-Motzkin is
    applied whenever it is exact for the variable; otherwise the variable is
    retained as an existential, so the result is always exact.
    """
    dims = list(dims)
    missing = [d for d in dims if d not in s.dims]
    if missing:
        raise ValueError(f"cannot project unknown dims {missing}")
    keep = [d for d in s.dims if d not in dims]
    visible = set(keep) | set(s.params)
    out = []
    for d in s.disjuncts:
        c = Conjunct(d.constraints, d.exists + tuple(dims))
        c = simplify_conjunct(c, visible)
        if c is None:
            continue
        out.append(_project_exact(c, visible))
    return IntSet(s.space, keep, out, s.params)


def lex_lt(arity: int, in_space: str = "", out_space: str = "",
           in_dims: Sequence[str] | None = None, out_dims: Sequence[str] | None = None) -> IntRel:
    """Strict lexicographic order ``{[a] -> [b] : a <lex b}`` as ``arity`` disjuncts."""
    if arity < 0:
        raise ArityMismatch("negative arity")
    in_dims = tuple(in_dims) if in_dims is not None else tuple(f"a{i}" for i in range(arity))
    out_dims = tuple(out_dims) if out_dims is not None else tuple(f"b{i}" for i in range(arity))
    if len(in_dims) != arity or len(out_dims) != arity:
        raise ArityMismatch("time vector arity mismatch")
    return IntRel(in_space, in_dims, out_space, out_dims, lex_disjuncts(
        [AffineExpr.var(x) for x in in_dims], [AffineExpr.var(y) for y in out_dims]))


def lex_disjuncts(left: Sequence[AffineExpr], right: Sequence[AffineExpr]) -> list[Conjunct]:
    """Conjuncts for ``left <lex right`` over affine time vectors."""
    if len(left) != len(right):
        raise ArityMismatch(f"time vectors of arity {len(left)} and {len(right)}")
    out = []
    for i in range(len(left)):
        cons = [eq(left[j], right[j]) for j in range(i)]
        cons.append(lt(left[i], right[i]))
        out.append(Conjunct(cons))
    return out


def lex_order_rel(in_space, in_dims, left, out_space, out_dims, right, params=()) -> IntRel:
    return IntRel(in_space, in_dims, out_space, out_dims, lex_disjuncts(left, right), params)


# -- emptiness -----------------------------------------------------------------


def is_empty(s: _Poly, param_bounds: Mapping[str, tuple[int | None, int | None]] | None = None,
             samples: Sequence[int] | Mapping[str, Sequence[int]] | None = None,
             box: int = 16, node_budget: int = 200_000) -> EmptinessVerdict:
    """Three-tier emptiness decision.

    1. gcd normalization refutes a disjunct;
    2. Fourier-Motzkin with integer tightening refutes it (parameters are
       eliminated like any other variable, so the refutation holds for all
       parameter values);
    3. otherwise search for an integer witness with parameters drawn from
       ``samples`` (clipped to ``param_bounds``) and free dimensions clipped to
       ``[-box, box]``. A complete search of a fully bounded region proves
       emptiness; a partial one yields Inconclusive.
    """
    param_bounds = dict(param_bounds or {})
    space = getattr(s, "space", None)
    if space is None:
        space = f"{s.in_space}->{s.out_space}"
    if not s.disjuncts:
        return EmptinessVerdict(Verdict.EMPTY, reason="no disjuncts")
    cand = _param_candidates(s.params, param_bounds, samples)
    reasons = []
    merged_box: dict[str, tuple[int, int]] = {}
    for d in s.disjuncts:
        cons = list(d.constraints)
        for p, (lo, hi) in param_bounds.items():
            if p not in s.params:
                continue
            if lo is not None:
                cons.append(Constraint(AffineExpr.var(p) - lo))
            if hi is not None:
                cons.append(Constraint(AffineExpr.const(hi) - AffineExpr.var(p)))
        if any(gcd_normalize(c) is PROVEN_INFEASIBLE for c in cons):
            continue
        if fm_infeasible(cons):
            continue
        order = list(s.params) + list(s.dims) + list(d.exists)
        out = search_witness(cons, order, cand, box=box, node_budget=node_budget)
        if out.point is not None:
            pt = out.point
            w = WitnessPoint(
                space,
                {k: pt[k] for k in s.dims},
                {k: pt[k] for k in s.params},
                {k: pt[k] for k in d.exists},
            )
            env = w.env()
            if not all(c.holds(env) for c in d.constraints):
                raise AssertionError("witness failed re-validation")
            return EmptinessVerdict(Verdict.NONEMPTY, w)
        if not out.exhaustive:
            reasons.append(out.reason)
            for k, (lo, hi) in out.box.items():
                old = merged_box.get(k)
                merged_box[k] = (lo, hi) if old is None else (min(lo, old[0]), max(hi, old[1]))
    if reasons:
        if s.params:
            reasons.append(f"parameters sampled from {sorted({v for vs in cand.values() for v in vs})}")
        return EmptinessVerdict(Verdict.INCONCLUSIVE, reason="; ".join(dict.fromkeys(reasons)), box=merged_box)
    return EmptinessVerdict(Verdict.EMPTY, reason="refuted")


def _param_candidates(params, bounds, samples) -> dict[str, list[int]]:
    out = {}
    for p in params:
        if isinstance(samples, Mapping):
            vals = list(samples.get(p, DEFAULT_PARAM_SAMPLES))
        else:
            vals = list(samples if samples is not None else DEFAULT_PARAM_SAMPLES)
        lo, hi = bounds.get(p, (None, None))
        extra = [v for v in (lo, hi) if v is not None]
        vals = [v for v in dict.fromkeys(vals + extra)
                if (lo is None or v >= lo) and (hi is None or v <= hi)]
        out[p] = vals
    return out


def equal_on_box(a: _Poly, b: _Poly, box: Mapping[str, tuple[int, int]], params: Mapping[str, int]) -> bool:
    """Pointwise equality of two sets/relations over a finite box."""
    ranges = [range(box[d][0], box[d][1] + 1) for d in a.dims]
    for pt in itertools.product(*ranges):
        if a.contains(pt, params) != b.contains(pt, params):
            return False
    return True
