"""Dependence test (RaW/WaW/WaR) and race verdicts over a kernel model."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .isetcore import (
    AffineExpr,
    Conjunct,
    Constraint,
    EmptinessVerdict,
    IntRel,
    UnionRel,
    Verdict,
    compose,
    eq,
    gt,
    intersect,
    inverse,
    is_empty,
    lt,
)
from .kmodel import (
    Access,
    AccessKind,
    KernelModel,
    MemSpace,
    Statement,
    derive_param_bounds,
    pair_names,
    restricted_access,
    schedule_before,
)


class DependenceKind(enum.Enum):
    RAW = "RaW"
    WAW = "WaW"
    WAR = "WaR"

    @property
    def sides(self) -> tuple[AccessKind, AccessKind]:
        """Access kinds of (earlier, later) instance."""
        return {
            DependenceKind.RAW: (AccessKind.WRITE, AccessKind.READ),
            DependenceKind.WAW: (AccessKind.WRITE, AccessKind.WRITE),
            DependenceKind.WAR: (AccessKind.READ, AccessKind.WRITE),
        }[self]

    @classmethod
    def of(cls, first: AccessKind, second: AccessKind) -> "DependenceKind":
        for k in cls:
            if k.sides == (first, second):
                return k
        raise ValueError("two reads never conflict")


class Summary(enum.Enum):
    RACE_FREE = "RaceFree"
    RACE_FOUND = "RaceFound"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class Witness:
    source: str
    source_point: dict[str, int]
    target: str
    target_point: dict[str, int]
    params: dict[str, int]
    array: str
    cell: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "source": {"statement": self.source, "point": self.source_point},
            "target": {"statement": self.target, "point": self.target_point},
            "params": self.params,
            "array": self.array,
            "cell": list(self.cell),
        }


@dataclass
class PairResult:
    """One conflict set: an access pair of two statements on one array."""

    kind: DependenceKind
    source: str
    target: str
    array: str
    relation: IntRel
    verdict: EmptinessVerdict
    witness: Witness | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "source": self.source,
            "target": self.target,
            "array": self.array,
            "cell": list(self.witness.cell) if self.witness else None,
            "verdict": self.verdict.status.value,
            "reason": self.verdict.reason or None,
            "witness": self.witness.to_dict() if self.witness else None,
        }


@dataclass
class DependenceReport:
    model: str
    mode: str  # "race" or "dep"
    pairs: list[PairResult] = field(default_factory=list)
    verdict: Summary = Summary.RACE_FREE
    reasons: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def races(self) -> list[PairResult]:
        return [p for p in self.pairs if p.verdict.is_nonempty]

    @property
    def witnesses(self) -> list[Witness]:
        return [p.witness for p in self.races if p.witness is not None]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "mode": self.mode,
            "verdict": self.verdict.value,
            "reasons": list(self.reasons),
            "notes": list(self.notes),
            "results": [p.to_dict() for p in self.pairs],
        }


# -- relation builders --------------------------------------------------------


def _model_with(model: KernelModel, assume: Iterable[Constraint]) -> KernelModel:
    assume = tuple(assume)
    if not assume:
        return model
    from dataclasses import replace
    bounds = dict(model.param_bounds)
    for p, (lo, hi) in derive_param_bounds(model.params, assume).items():
        old_lo, old_hi = bounds.get(p, (None, None))
        lo = lo if old_lo is None else old_lo if lo is None else max(lo, old_lo)
        hi = hi if old_hi is None else old_hi if hi is None else min(hi, old_hi)
        bounds[p] = (lo, hi)
    return replace(model, assumptions=tuple(model.assumptions) + assume, param_bounds=bounds)


def same_cell(model: KernelModel, s: Statement, a: Access, t: Statement, b: Access) -> IntRel:
    """Pairs of instances of ``s`` and ``t`` touching one cell via ``a`` and ``b``."""
    ra = restricted_access(model, s, a)
    rb = restricted_access(model, t, b)
    rel = compose(ra, inverse(rb))
    x, y = pair_names(model, s, t)
    return rel.rename_dims(x, y)


def dependence_pairs(model: KernelModel, kind: DependenceKind):
    first, second = kind.sides
    for s in model.statements:
        for t in model.statements:
            for ka, a in s.accesses():
                if ka is not first:
                    continue
                for kb, b in t.accesses():
                    if kb is not second or a.array.name != b.array.name:
                        continue
                    rel = intersect(same_cell(model, s, a, t, b), schedule_before(model, s, t))
                    yield s, a, t, b, rel


def dependences(model: KernelModel, kind: DependenceKind, assume: Iterable[Constraint] = ()) -> UnionRel:
    """Instance pairs ordered by the schedule that touch one cell with ``kind``."""
    model = _model_with(model, assume)
    out = UnionRel()
    for *_, rel in dependence_pairs(model, kind):
        out.add(rel)
    return out


def _differ(x: str, y: str) -> list[Conjunct]:
    return [Conjunct([lt(x, y)]), Conjunct([gt(x, y)])]


def unordered_conflicts(model: KernelModel, s: Statement, a: Access, t: Statement, b: Access) -> IntRel:
    """Same-cell pairs from distinct threads not ordered either way.

    For two distinct threads the same-thread part of happens-before never
    applies, so "neither ordered before the other" reduces to: different
    barrier group, or same group and equal phase.
    """
    rel = same_cell(model, s, a, t, b)
    x, y = rel.in_dims, rel.out_dims
    g = model.grid
    n = len(g.names)
    if n == 0:
        return rel._replace([])
    pos = {name: i for i, name in enumerate(g.names)}
    diff_thread = [c for name in g.names for c in _differ(x[pos[name]], y[pos[name]])]
    rel = intersect(rel, rel._replace(diff_thread), prune=True)
    if a.array.space is MemSpace.SHARED:
        same_block = [eq(x[pos[b_]], y[pos[b_]]) for b_ in g.block_names]
        rel = intersect(rel, rel._replace([Conjunct(same_block)]), prune=True)
    ren_s = dict(zip(s.dims, x))
    ren_t = dict(zip(t.dims, y))
    ps = model.schedule.phase(s.label).rename(ren_s)
    pt = model.schedule.phase(t.label).rename(ren_t)
    unordered = [c for name in g.group_names for c in _differ(x[pos[name]], y[pos[name]])]
    unordered.append(Conjunct([eq(x[pos[name]], y[pos[name]]) for name in g.group_names] + [eq(ps, pt)]))
    return intersect(rel, rel._replace(unordered), prune=True)


def race_pairs(model: KernelModel):
    """Unordered conflicting access pairs, each unordered combination once."""
    items = [(s, k, a) for s in model.statements for k, a in s.accesses()]
    for i, (s, ka, a) in enumerate(items):
        for (t, kb, b) in items[i:]:
            if a.array.name != b.array.name:
                continue
            if ka is AccessKind.READ and kb is AccessKind.READ:
                continue
            yield s, ka, a, t, kb, b


# -- verdicts ---------------------------------------------------------------------


def _witness(model: KernelModel, rel: IntRel, verdict: EmptinessVerdict, s: Statement, a: Access,
             t: Statement, arr: str) -> Witness:
    w = verdict.witness
    params = dict(w.param_values)
    env = w.env()
    src = {d: env[x] for d, x in zip(s.dims, rel.in_dims)}
    dst = {d: env[y] for d, y in zip(t.dims, rel.out_dims)}
    ra = restricted_access(model, s, a)
    full = {**{p: params.get(p, 0) for p in ra.params}}
    cells = ra.image_of(dict(zip(ra.in_dims, [src[d] for d in s.dims])), full)
    cell = tuple(cells[0][o] for o in ra.out_dims) if cells else ()
    return Witness(s.label, src, t.label, dst, params, arr, cell)


def _decide(model: KernelModel, rel: IntRel, samples, box: int) -> EmptinessVerdict:
    return is_empty(rel, param_bounds=model.param_bounds, samples=samples, box=box)


def _summarize(report: DependenceReport) -> DependenceReport:
    if any(p.verdict.is_nonempty for p in report.pairs):
        report.verdict = Summary.RACE_FOUND
    elif any(p.verdict.is_inconclusive for p in report.pairs):
        report.verdict = Summary.INCONCLUSIVE
        for p in report.pairs:
            if p.verdict.is_inconclusive:
                report.reasons.append(f"{p.kind.value} {p.source}->{p.target} on {p.array}: {p.verdict.reason}")
    else:
        report.verdict = Summary.RACE_FREE
    return report


def races(model: KernelModel, samples: Sequence[int] | Mapping[str, Sequence[int]] | None = None,
          box: int = 16, assume: Iterable[Constraint] = ()) -> DependenceReport:
    """Race check: conflicting accesses of distinct threads left unordered by happens-before."""
    model = _model_with(model, assume)
    report = DependenceReport(model.name, "race", notes=list(model.notes))
    for s, ka, a, t, kb, b in race_pairs(model):
        rel = unordered_conflicts(model, s, a, t, b)
        v = _decide(model, rel, samples, box)
        kind = DependenceKind.of(ka, kb) if (ka, kb) != (AccessKind.READ, AccessKind.WRITE) \
            else DependenceKind.WAR
        res = PairResult(kind, s.label, t.label, a.array.name, rel, v)
        if v.is_nonempty:
            res.witness = _witness(model, rel, v, s, a, t, a.array.name)
        report.pairs.append(res)
    return _summarize(report)


def dependence_report(model: KernelModel, samples=None, box: int = 16,
                      assume: Iterable[Constraint] = ()) -> DependenceReport:
    """Sequential-style dependence test: every kind, every statement pair.

    The summary verdict reads "RaceFound" when some dependence exists; it is
    the raw dependence test without happens-before filtering.
    """
    model = _model_with(model, assume)
    report = DependenceReport(model.name, "dep", notes=list(model.notes))
    for kind in DependenceKind:
        for s, a, t, b, rel in dependence_pairs(model, kind):
            v = _decide(model, rel, samples, box)
            res = PairResult(kind, s.label, t.label, a.array.name, rel, v)
            if v.is_nonempty:
                res.witness = _witness(model, rel, v, s, a, t, a.array.name)
            report.pairs.append(res)
    return _summarize(report)


def fixed_params(values: Mapping[str, int]) -> list[Constraint]:
    """Equalities pinning parameters to concrete values."""
    return [eq(AffineExpr.var(p), v) for p, v in values.items()]
