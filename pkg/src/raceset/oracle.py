"""Brute-force ground truth: concrete runs, access logs and lattice enumeration.

Nothing here uses the symbolic solver. Bounds come from plain interval
propagation and points from exhaustive enumeration, so the oracle can judge
the symbolic engine independently.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .isetcore import Conjunct, Constraint, IntRel, IntSet
from .isetcore.sets import _Poly
from .kmodel import AccessKind, KernelModel, MemSpace

MAX_POINTS = 10_000_000
STEP_LIMIT = 1_000_000


class BoxTooLarge(ValueError):
    pass


class StepLimitExceeded(RuntimeError):
    pass


class OutOfBounds(RuntimeError):
    def __init__(self, array: str, cell: tuple[int, ...], where: str = ""):
        self.array = array
        self.cell = cell
        super().__init__(f"out-of-bounds access {array}{list(cell)}{' ' + where if where else ''}")


class InvalidInstance(ValueError):
    pass


# -- instances --------------------------------------------------------------------


@dataclass
class ConcreteInstance:
    params: dict[str, int] = field(default_factory=dict)
    arrays: dict[str, list] = field(default_factory=dict)
    grid: tuple[int, ...] | None = None  # (gx, gy, gz)
    block: tuple[int, ...] | None = None  # (bx, by, bz)
    csr: tuple[str, str, str] | None = ("rowPtr", "colInd", "K")  # rowPtr, colInd, column-count param
    name: str = ""

    def validate(self) -> "ConcreteInstance":
        if self.csr is None:
            return self
        rp, ci, cols = self.csr
        if rp not in self.arrays:
            return self
        row = list(self.arrays[rp])
        if not row or row[0] != 0:
            raise InvalidInstance(f"{rp}[0] must be 0")
        if any(b < a for a, b in zip(row, row[1:])):
            raise InvalidInstance(f"{rp} must be nondecreasing")
        if ci in self.arrays:
            idx = list(self.arrays[ci])
            if row[-1] != len(idx):
                raise InvalidInstance(f"last entry of {rp} must equal nnz = {len(idx)}")
            if cols in self.params and any(not 0 <= c < self.params[cols] for c in idx):
                raise InvalidInstance(f"{ci} entries must lie in [0, {cols})")
        return self

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConcreteInstance":
        csr = d.get("csr", ["rowPtr", "colInd", "K"])
        return cls(
            params={k: int(v) for k, v in d.get("params", {}).items()},
            arrays={k: list(v) for k, v in d.get("arrays", {}).items()},
            grid=tuple(d["grid"]) if "grid" in d else None,
            block=tuple(d["block"]) if "block" in d else None,
            csr=tuple(csr) if csr else None,
            name=d.get("name", ""),
        ).validate()

    def to_dict(self) -> dict:
        out: dict = {"name": self.name, "params": self.params, "arrays": self.arrays}
        if self.grid is not None:
            out["grid"] = list(self.grid)
        if self.block is not None:
            out["block"] = list(self.block)
        out["csr"] = list(self.csr) if self.csr else None
        return out


def load_instance(path: str) -> ConcreteInstance:
    with open(path, encoding="utf-8") as fh:
        return ConcreteInstance.from_dict(json.load(fh))


@dataclass
class AccessLogEntry:
    block: tuple[int, ...]
    thread: tuple[int, ...]
    phase: int
    serial: int
    array: str
    cell: tuple[int, ...]
    kind: AccessKind
    group: tuple[int, ...] = ()  # barrier group (block coords plus unsynchronized thread coords)
    shared: bool = False
    statement: str = ""
    point: dict[str, int] = field(default_factory=dict)  # statement instance or SSA snapshot
    index_names: tuple[str, ...] = ()  # SSA names of the index operands (mini-IR runs)

    @property
    def thread_key(self) -> tuple:
        return self.block + self.thread


@dataclass
class OracleVerdict:
    pairs: list[tuple[AccessLogEntry, AccessLogEntry]]

    @property
    def race_found(self) -> bool:
        return bool(self.pairs)

    @property
    def label(self) -> str:
        return "RaceFound" if self.pairs else "RaceFree"


# -- interval propagation and enumeration ---------------------------------------


def _rows(constraints: Iterable[Constraint]):
    for c in constraints:
        t = dict(c.expr.terms)
        yield t, c.expr.constant
        if c.is_eq:
            yield {k: -v for k, v in t.items()}, -c.expr.constant


def intervals(constraints: Sequence[Constraint], known: Mapping[str, tuple[int, int]],
              rounds: int = 60) -> dict[str, tuple[int | None, int | None]] | None:
    """Bounds-consistency propagation; None when some interval becomes empty."""
    rows = list(_rows(constraints))
    names = set(known)
    for t, _ in rows:
        names |= set(t)
    lo: dict[str, int | None] = {n: None for n in names}
    hi: dict[str, int | None] = {n: None for n in names}
    for n, (a, b) in known.items():
        lo[n], hi[n] = a, b
    for _ in range(rounds):
        changed = False
        for t, c in rows:
            for x, a in t.items():
                # a*x >= -c - sum(others); need max of others
                s = c
                ok = True
                for y, b in t.items():
                    if y == x:
                        continue
                    m = hi[y] if b > 0 else lo[y]
                    if m is None:
                        ok = False
                        break
                    s += b * m
                if not ok:
                    continue
                if a > 0:
                    nb = -(s // a)
                    if lo[x] is None or nb > lo[x]:
                        lo[x] = nb
                        changed = True
                else:
                    nb = s // (-a)
                    if hi[x] is None or nb < hi[x]:
                        hi[x] = nb
                        changed = True
                if lo[x] is not None and hi[x] is not None and lo[x] > hi[x]:
                    return None
        if not changed:
            break
    for t, c in rows:
        if not t and c < 0:
            return None
    return {n: (lo[n], hi[n]) for n in names}


def _mesh(ranges: Sequence[tuple[int, int]]) -> np.ndarray:
    total = 1
    for a, b in ranges:
        total *= max(0, b - a + 1)
    if total > MAX_POINTS:
        raise BoxTooLarge(f"{total} lattice points exceed the limit of {MAX_POINTS}")
    if total == 0:
        return np.zeros((0, len(ranges)), dtype=np.int64)
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in ranges]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1) if axes else np.zeros((1, 0), dtype=np.int64)


def _mask(points: np.ndarray, names: Sequence[str], env: Mapping[str, int],
          constraints: Iterable[Constraint]) -> np.ndarray:
    col = {n: i for i, n in enumerate(names)}
    ok = np.ones(points.shape[0], dtype=bool)
    for c in constraints:
        v = np.full(points.shape[0], c.expr.constant, dtype=np.int64)
        for n, k in c.expr.terms:
            if n in col:
                v += k * points[:, col[n]]
            else:
                v += k * int(env[n])
        ok &= (v == 0) if c.is_eq else (v >= 0)
    return ok


def _box_of(s: _Poly, box) -> dict[str, tuple[int, int]]:
    if isinstance(box, int):
        return {d: (-box, box) for d in s.dims}
    if isinstance(box, tuple) and len(box) == 2 and all(isinstance(x, int) for x in box):
        return {d: box for d in s.dims}
    return {d: tuple(box[d]) for d in s.dims}


def enumerate_set(s: IntSet | IntRel, box, params: Mapping[str, int] | None = None) -> set[tuple[int, ...]]:
    """Exact lattice points of ``s`` inside ``box``.

    ``box`` is an int ``B`` (every dim in ``[-B, B]``), a ``(lo, hi)`` pair, or
    a per-dim mapping. Existentials are enumerated over the range that interval
    propagation allows; an unbounded existential is an error.
    """
    params = dict(params or {})
    missing = [p for p in s.params if p not in params]
    if missing:
        raise KeyError(f"missing parameter values {missing}")
    b = _box_of(s, box)
    ranges = [b[d] for d in s.dims]
    if any(lo > hi for lo, hi in ranges):
        return set()
    out: set[tuple[int, ...]] = set()
    base = _mesh(ranges)
    for d in s.disjuncts:
        if not d.exists:
            m = _mask(base, s.dims, params, d.constraints)
            out.update(map(tuple, base[m].tolist()))
            continue
        known = {k: v for k, v in zip(s.dims, ranges)}
        known.update({p: (v, v) for p, v in params.items() if p in s.params})
        iv = intervals(d.constraints, known)
        if iv is None:
            continue
        ex_ranges = []
        for e in d.exists:
            lo, hi = iv.get(e, (None, None))
            if lo is None or hi is None:
                raise BoxTooLarge(f"existential {e} is unbounded inside the box")
            ex_ranges.append((lo, hi))
        pts = _mesh(ranges + ex_ranges)
        m = _mask(pts, list(s.dims) + list(d.exists), params, d.constraints)
        out.update(map(tuple, pts[m][:, : len(s.dims)].tolist()))
    return out


def points_of(constraints: Sequence[Constraint], dims: Sequence[str], env: Mapping[str, int],
              exists: Sequence[str] = ()) -> list[dict[str, int]]:
    """All integer solutions over ``dims`` with everything else fixed by ``env``.

    The box comes from interval propagation; unbounded dims are an error.
    """
    fixed = {k: (v, v) for k, v in env.items()}
    iv = intervals(constraints, fixed)
    if iv is None:
        return []
    names = list(dims) + list(exists)
    ranges = []
    for n in names:
        lo, hi = iv.get(n, (None, None))
        if lo is None or hi is None:
            raise BoxTooLarge(f"dimension {n} is unbounded")
        ranges.append((lo, hi))
    pts = _mesh(ranges)
    m = _mask(pts, names, env, constraints)
    seen = []
    for row in pts[m][:, : len(dims)].tolist():
        p = dict(zip(dims, row))
        if p not in seen:
            seen.append(p)
    return seen


def union_points(s: IntSet | IntRel, env: Mapping[str, int]) -> list[dict[str, int]]:
    out = []
    for d in s.disjuncts:
        for p in points_of(d.constraints, s.dims, {k: env[k] for k in s.params}, d.exists):
            if p not in out:
                out.append(p)
    return out


# -- running a kernel model ----------------------------------------------------------


def _group(model: KernelModel, env: Mapping[str, int]) -> tuple[int, ...]:
    return tuple(env[n] for n in model.grid.group_names)


def run_model(instance: ConcreteInstance, model: KernelModel) -> list[AccessLogEntry]:
    """Enumerate every statement instance of ``model`` at concrete parameters."""
    params = dict(instance.params)
    missing = [p for p in model.params if p not in params]
    if missing:
        raise InvalidInstance(f"instance lacks values for {missing}")
    for c in model.context():
        if not c.holds(params):
            raise InvalidInstance("instance violates the model assumptions")
    g = model.grid
    per_thread: dict[tuple, list] = {}
    for st in model.statements:
        for pt in union_points(_with_box(st.domain, g), params):
            env = {**params, **pt}
            key = tuple(pt[n] for n in g.names)
            time = tuple(e.evaluate(env) for e in model.schedule.padded(st.label))
            per_thread.setdefault(key, []).append((time, st, pt))
    log: list[AccessLogEntry] = []
    nb = len(g.block_names)
    for key in sorted(per_thread):
        items = sorted(per_thread[key], key=lambda x: (x[0], x[1].label, sorted(x[2].items())))
        serial = 0
        for time, st, pt in items:
            env = {**params, **pt}
            for kind, acc in st.accesses():
                rel = acc.rel
                fixed = {**{p: params[p] for p in rel.params}, **{i: pt[d] for i, d in zip(rel.in_dims, st.dims)}}
                cells = []
                for dj in rel.disjuncts:
                    for c in points_of(dj.constraints, rel.out_dims, fixed, dj.exists):
                        cell = tuple(c[o] for o in rel.out_dims)
                        if cell not in cells:
                            cells.append(cell)
                for cell in cells:
                    log.append(AccessLogEntry(
                        block=key[:nb], thread=key[nb:], phase=time[0] if time else 0, serial=serial,
                        array=acc.array.name, cell=cell, kind=kind, group=_group(model, env),
                        shared=acc.array.space is MemSpace.SHARED, statement=st.label, point=dict(pt),
                    ))
                    serial += 1
    return log


def _with_box(dom: IntSet, grid) -> IntSet:
    extra = grid.box_constraints()
    return IntSet(dom.space, dom.dims, [Conjunct(d.constraints + tuple(extra), d.exists) for d in dom.disjuncts],
                  dom.params)


def run(instance: ConcreteInstance, program) -> list[AccessLogEntry]:
    """Access log of a kernel model or a parsed mini-IR function."""
    if isinstance(program, KernelModel):
        return run_model(instance, program)
    from .miniir.interp import run_function
    return run_function(instance, program)


# -- race detection -------------------------------------------------------------------


def normalize(log: Iterable[AccessLogEntry]) -> list[AccessLogEntry]:
    return sorted(log, key=lambda e: (e.block, e.thread, e.serial))


def unordered(a: AccessLogEntry, b: AccessLogEntry) -> bool:
    """Neither access is guaranteed to happen before the other."""
    if a.thread_key == b.thread_key:
        return False
    if a.group != b.group:
        return True
    return a.phase == b.phase


def detect_races(log: Iterable[AccessLogEntry], limit: int | None = None) -> OracleVerdict:
    """All conflicting unordered pairs (same cell, one write, distinct threads)."""
    buckets: dict[tuple, list[AccessLogEntry]] = {}
    for e in normalize(log):
        key = (e.array, e.cell, e.block if e.shared else None)
        buckets.setdefault(key, []).append(e)
    pairs = []
    for entries in buckets.values():
        if all(e.kind is AccessKind.READ for e in entries):
            continue
        for a, b in itertools.combinations(entries, 2):
            if a.kind is AccessKind.READ and b.kind is AccessKind.READ:
                continue
            if unordered(a, b):
                pairs.append((a, b))
                if limit is not None and len(pairs) >= limit:
                    return OracleVerdict(pairs)
    return OracleVerdict(pairs)
