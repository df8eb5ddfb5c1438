"""Kernel memory model: statements, access relations, grid and phased schedule."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .isetcore import (
    AffineExpr,
    ArityMismatch,
    Conjunct,
    Constraint,
    IntRel,
    IntSet,
    UnionRel,
    UnionSet,
    eq,
    intersect,
    lex_disjuncts,
    lt,
)


class UndeclaredParameter(ValueError):
    pass


class ModelError(ValueError):
    pass


class MemSpace(enum.Enum):
    GLOBAL = "global"
    SHARED = "shared"
    LOCAL = "local"


class AccessKind(enum.Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class ArrayRef:
    name: str
    space: MemSpace
    arity: int
    element_kind: str = "i32"
    extents: tuple[AffineExpr, ...] | None = None

    def __post_init__(self):
        if self.arity < 1:
            raise ModelError(f"array {self.name} must have arity >= 1")
        if self.extents is not None and len(self.extents) != self.arity:
            raise ModelError(f"array {self.name}: {len(self.extents)} extents for arity {self.arity}")
        if self.space is MemSpace.SHARED:
            if self.extents is None or any(not e.is_constant() for e in self.extents):
                raise ModelError(f"shared array {self.name} needs a static extent per dimension")


@dataclass
class Access:
    array: ArrayRef
    rel: IntRel  # statement instances -> cells


@dataclass
class Statement:
    label: str
    domain: IntSet
    reads: list[Access] = field(default_factory=list)
    writes: list[Access] = field(default_factory=list)

    @property
    def dims(self) -> tuple[str, ...]:
        return self.domain.dims

    def accesses(self) -> Iterable[tuple[AccessKind, Access]]:
        for a in self.reads:
            yield AccessKind.READ, a
        for a in self.writes:
            yield AccessKind.WRITE, a


@dataclass
class GridConfig:
    """Block dims (``bx``...) and thread dims (``tx``...) with their extents.

    ``barrier_span`` lists the thread dims a barrier synchronizes across; the
    threads that share every other grid coordinate form one barrier group.
    ``None`` means a block-wide barrier.
    """

    block_dims: tuple[tuple[str, int], ...] = ()  # block index dims with grid extents
    thread_dims: tuple[tuple[str, int], ...] = ()  # thread index dims with block extents
    bindings: dict[str, str] = field(default_factory=dict)  # "tid.x" -> "tx"
    barrier_span: tuple[str, ...] | None = None

    def __post_init__(self):
        for name, ext in self.block_dims + self.thread_dims:
            if ext < 1:
                raise ModelError(f"grid extent of {name} must be >= 1")
        if self.barrier_span is not None:
            unknown = set(self.barrier_span) - set(self.thread_names)
            if unknown:
                raise ModelError(f"barrier spans unknown thread dims {sorted(unknown)}")

    @property
    def block_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.block_dims)

    @property
    def thread_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.thread_dims)

    @property
    def names(self) -> tuple[str, ...]:
        return self.block_names + self.thread_names

    @property
    def extents(self) -> dict[str, int]:
        return dict(self.block_dims + self.thread_dims)

    @property
    def group_names(self) -> tuple[str, ...]:
        """Coordinates that must agree for two threads to share a barrier."""
        if self.barrier_span is None:
            return self.block_names
        return self.block_names + tuple(t for t in self.thread_names if t not in self.barrier_span)

    def box_constraints(self) -> list[Constraint]:
        out = []
        for name, ext in self.block_dims + self.thread_dims:
            out.append(Constraint(AffineExpr.var(name)))
            out.append(lt(name, ext))
        return out


@dataclass
class PhasedSchedule:
    """Per statement time vector; component 0 is the barrier phase."""

    times: dict[str, tuple[AffineExpr, ...]] = field(default_factory=dict)

    @property
    def arity(self) -> int:
        return max((len(t) for t in self.times.values()), default=0)

    def padded(self, label: str) -> tuple[AffineExpr, ...]:
        t = tuple(self.times[label])
        return t + (AffineExpr.const(0),) * (self.arity - len(t))

    def phase(self, label: str) -> AffineExpr:
        return self.padded(label)[0] if self.arity else AffineExpr.const(0)


@dataclass
class KernelModel:
    name: str
    params: tuple[str, ...] = ()
    param_bounds: dict[str, tuple[int | None, int | None]] = field(default_factory=dict)
    assumptions: tuple[Constraint, ...] = ()  # e.g. 0 <= rs <= re <= A_S
    arrays: dict[str, ArrayRef] = field(default_factory=dict)
    statements: list[Statement] = field(default_factory=list)
    grid: GridConfig = field(default_factory=GridConfig)
    schedule: PhasedSchedule = field(default_factory=PhasedSchedule)
    notes: list[str] = field(default_factory=list)

    def statement(self, label: str) -> Statement:
        for s in self.statements:
            if s.label == label:
                return s
        raise KeyError(label)

    def validate(self) -> "KernelModel":
        declared = set(self.params)
        grid = self.grid.names
        labels = [s.label for s in self.statements]
        if len(set(labels)) != len(labels):
            raise ModelError("duplicate statement labels")
        for c in self.assumptions:
            _check_params(c.names(), declared, "assumption")
        for s in self.statements:
            if tuple(s.dims[: len(grid)]) != grid:
                raise ModelError(f"statement {s.label}: domain must start with grid dims {list(grid)}")
            _check_params(s.domain.params, declared, f"domain of {s.label}")
            for _, a in s.accesses():
                if a.rel.in_space != s.label or len(a.rel.in_dims) != len(s.dims):
                    raise ArityMismatch(f"access of {s.label} does not match its domain")
                if a.array.name not in self.arrays or a.rel.out_space != a.array.name:
                    raise ModelError(f"{s.label} accesses undeclared array {a.rel.out_space}")
                if len(a.rel.out_dims) != a.array.arity:
                    raise ArityMismatch(f"{s.label} accesses {a.array.name} with arity {len(a.rel.out_dims)}")
                _check_params(a.rel.params, declared, f"access of {s.label}")
            if s.label not in self.schedule.times:
                raise ModelError(f"statement {s.label} has no schedule")
            for e in self.schedule.times[s.label]:
                _check_params(e.names() - set(s.dims), declared, f"schedule of {s.label}")
            if self.schedule.phase(s.label).names() & set(grid):
                raise ModelError(f"phase of {s.label} depends on thread coordinates")
        return self

    # -- derived sets ---------------------------------------------------------

    def context(self) -> list[Constraint]:
        """Assumptions and bounds on parameters."""
        out = list(self.assumptions)
        for p, (lo, hi) in self.param_bounds.items():
            if lo is not None:
                out.append(Constraint(AffineExpr.var(p) - lo))
            if hi is not None:
                out.append(Constraint(AffineExpr.const(hi) - AffineExpr.var(p)))
        return out

    def full_domain(self, s: Statement) -> IntSet:
        """Domain with grid box and parameter context folded in."""
        extra = IntSet.from_constraints(s.label, s.dims, self.grid.box_constraints() + self.context(),
                                        self.params)
        return intersect(s.domain, extra)


def derive_param_bounds(params, assumptions) -> dict[str, tuple[int | None, int | None]]:
    """Constant bounds on single parameters stated directly by the assumptions."""
    lo: dict[str, int] = {}
    hi: dict[str, int] = {}
    for c in assumptions:
        names = c.names()
        if len(names) != 1:
            continue
        (p,) = names
        if p not in params:
            continue
        k, const = c.expr.coeff(p), c.expr.constant
        if c.is_eq:
            if const % k == 0:
                v = -const // k
                lo[p] = max(lo.get(p, v), v)
                hi[p] = min(hi.get(p, v), v)
        elif k > 0:
            v = -(const // k)
            lo[p] = max(lo.get(p, v), v)
        else:
            v = const // (-k)
            hi[p] = min(hi.get(p, v), v)
    return {p: (lo.get(p), hi.get(p)) for p in params if p in lo or p in hi}


def _check_params(names: Iterable[str], declared: set[str], where: str) -> None:
    bad = set(names) - declared
    if bad:
        raise UndeclaredParameter(f"{where} uses undeclared parameters {sorted(bad)}")


def build_domain(model: KernelModel) -> UnionSet:
    """Union of all statement domains keyed by label."""
    return UnionSet(model.full_domain(s) for s in model.statements)


def restricted_access(model: KernelModel, s: Statement, a: Access) -> IntRel:
    dom = model.full_domain(s)
    # factor by the domain over the input tuple
    dom_rel = IntRel(s.label, s.dims, a.rel.out_space, a.rel.out_dims,
                     [Conjunct(d.constraints, d.exists) for d in dom._renamed_dims(a.rel.in_dims)],
                     dom.params)
    return intersect(a.rel, dom_rel)


def build_access(model: KernelModel, kind: AccessKind) -> UnionRel:
    out = UnionRel()
    for s in model.statements:
        for k, a in s.accesses():
            if k is kind:
                out.add(restricted_access(model, s, a))
    return out


def prime(names: Sequence[str], taken: Iterable[str] = ()) -> tuple[str, ...]:
    """Primed copies of ``names`` that avoid ``taken``."""
    taken = set(taken) | set(names)
    out = []
    for n in names:
        m = n + "'"
        while m in taken:
            m += "'"
        taken.add(m)
        out.append(m)
    return tuple(out)


def pair_names(model: KernelModel, s: Statement, t: Statement) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Input dims of ``s`` and disjoint output dims for ``t``."""
    return tuple(s.dims), prime(t.dims, set(s.dims) | set(model.params))


def _time(model: KernelModel, st: Statement, dims: Sequence[str]) -> list[AffineExpr]:
    ren = dict(zip(st.dims, dims))
    return [e.rename(ren) for e in model.schedule.padded(st.label)]


def schedule_before(model: KernelModel, s: Statement, t: Statement) -> IntRel:
    """``s`` instances whose time vector is lexicographically before ``t``'s."""
    a, b = pair_names(model, s, t)
    return IntRel(s.label, a, t.label, b,
                  lex_disjuncts(_time(model, s, a), _time(model, t, b)), model.params)


def happens_before_pair(model: KernelModel, s: Statement, t: Statement) -> IntRel:
    """Ordered pairs: same thread and schedule-before, or same barrier group and earlier phase."""
    a, b = pair_names(model, s, t)
    g = model.grid
    n = len(g.names)
    same_thread = [eq(x, y) for x, y in zip(a[:n], b[:n])]
    disj = [Conjunct(same_thread + list(c.constraints))
            for c in lex_disjuncts(_time(model, s, a), _time(model, t, b))]
    idx = {name: i for i, name in enumerate(g.names)}
    same_group = [eq(a[idx[x]], b[idx[x]]) for x in g.group_names]
    ps, pt = _time(model, s, a)[:1], _time(model, t, b)[:1]
    if ps:
        disj.append(Conjunct(same_group + [lt(ps[0], pt[0])]))
    rel = IntRel(s.label, a, t.label, b, disj, model.params)
    dom = _pair_domain(model, s, t, a, b)
    return intersect(rel, dom)


def _pair_domain(model, s, t, a, b) -> IntRel:
    ds = model.full_domain(s)._renamed_dims(a)
    dt = model.full_domain(t)._renamed_dims(b)
    out = []
    for x in ds:
        for y in dt:
            out.append(Conjunct(x.constraints + y.constraints, _disjoint_exists(x, y)))
    return IntRel(s.label, a, t.label, b, out, model.params)


def _disjoint_exists(x: Conjunct, y: Conjunct) -> tuple[str, ...]:
    if set(x.exists) & set(y.exists):
        raise ModelError("statement domains with clashing existentials")
    return x.exists + y.exists


def happens_before(model: KernelModel) -> UnionRel:
    out = UnionRel()
    for s in model.statements:
        for t in model.statements:
            out.add(happens_before_pair(model, s, t))
    return out


def ordered(model: KernelModel, s_label: str, s_point: Mapping[str, int],
            t_label: str, t_point: Mapping[str, int]) -> bool:
    """Concrete happens-before test between two instances (dims by name)."""
    s, t = model.statement(s_label), model.statement(t_label)
    g = model.grid.names
    env_s = dict(s_point)
    env_t = dict(t_point)
    ts = [e.evaluate(env_s) for e in model.schedule.padded(s.label)]
    tt = [e.evaluate(env_t) for e in model.schedule.padded(t.label)]
    if all(env_s[x] == env_t[x] for x in g) and ts < tt:
        return True
    if all(env_s[x] == env_t[x] for x in model.grid.group_names) and ts[:1] < tt[:1]:
        return True
    return False
