"""Recover a KernelModel from a mini-IR kernel.

A statement is one barrier-free segment of a basic block that touches
memory. Its domain quantifies over grid coordinates and the enclosing loops,
constrained by loop structure and by the branch conditions that guard it.
Loaded values that steer control become kernel-wide parameters bounded by the
source array's declared value range; loaded values used as indices become
free cell coordinates bounded by the array extent.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..isetcore import AffineExpr, Conjunct, Constraint, IntRel, IntSet, eq, ge, le, lt
from ..kmodel import Access, ArrayRef, GridConfig, KernelModel, MemSpace, PhasedSchedule, Statement
from .cfg import dominators, reachable, reverse_postorder
from .ir import Function, Instruction, IrError
from .loops import LoopInfo, condition_dnf, control_loads, find_loops
from .propagate import Affine, find_grid_iterators, memory_target, model_name, propagate


class UnsupportedConstruct(IrError):
    pass


@dataclass
class Section:
    """Barrier-free slice of a basic block holding memory accesses."""

    label: str
    block: str
    segment: int
    accesses: list[Instruction]


def sections(f: Function, hints: dict[str, str] | None = None) -> list[Section]:
    """Code sections in reverse postorder; ``hints`` renames sections by default label."""
    blocks = f.block_map()
    out = []
    for label in reverse_postorder(f):
        segs: list[list[Instruction]] = [[]]
        for ins in blocks[label].instrs:
            if ins.opcode == "barrier":
                segs.append([])
            elif ins.is_memory():
                segs[-1].append(ins)
        used = [(k, s) for k, s in enumerate(segs) if s]
        base = label.replace(".", "_")
        for k, s in used:
            name = base if len(used) == 1 else f"{base}_{k}"
            out.append(Section(name, label, k, s))
    if hints:
        for s in out:
            s.label = hints.get(s.label, s.label)
        names = [s.label for s in out]
        if len(set(names)) != len(names):
            raise UnsupportedConstruct("section hints merge distinct sections")
    return out


def grid_config(f: Function) -> GridConfig:
    """Grid dims (blocks x, y, z then threads z, y, x) and the barrier scope."""
    grid, block = f.grid or (1, 1, 1), f.block or (1, 1, 1)
    used = find_grid_iterators(f).bindings
    bdims, tdims, bindings = [], [], {}
    for i, a in enumerate("xyz"):
        if f"bid.{a}" in used or grid[i] > 1:
            bdims.append((f"b{a}", grid[i]))
            bindings[f"bid.{a}"] = f"b{a}"
    for i, a in reversed(list(enumerate("xyz"))):
        if f"tid.{a}" in used or block[i] > 1:
            tdims.append((f"t{a}", block[i]))
            bindings[f"tid.{a}"] = f"t{a}"
    scopes = {ins.scope for _, _, ins in f.instructions() if ins.opcode == "barrier"}
    if len(scopes) > 1:
        raise UnsupportedConstruct(f"mixed barrier scopes {sorted(scopes)}")
    span = None
    if scopes and (scope := scopes.pop()) != "block":
        width = int(scope[4:])
        size = block[0] * block[1] * block[2]
        names = dict((n, e) for n, e in tdims)
        if width >= size:
            span = None
        elif width == block[0]:
            span = ("tx",) if "tx" in names else ()
        elif width == block[0] * block[1]:
            span = tuple(n for n in ("ty", "tx") if n in names)
        else:
            raise UnsupportedConstruct(f"warp width {width} does not align with block shape {block}")
    return GridConfig(tuple(bdims), tuple(tdims), bindings, span)


class _Loops:
    """Dims, counters and trip parameters of the loop nest."""

    def __init__(self, infos: list[LoopInfo], grid_names: set[str], params: set[str]):
        self.by_header = {lp.header: lp for lp in infos}
        self.infos = infos
        self.dims: dict[str, list[str]] = {}
        self.counter: dict[str, AffineExpr] = {}
        self.structure: dict[str, list[Constraint]] = {}
        for lp in infos:  # outermost first
            outer = self.outer_dims(lp)
            allowed = grid_names | params | set(outer)
            ind = lp.induction
            init = ind.init.expr if ind is not None and isinstance(ind.init, Affine) else None
            if init is not None and not init.names() <= allowed:
                init = None
            if ind is None:
                n = f"n_{model_name(lp.header)}"
                self.dims[lp.header] = [n]
                self.counter[lp.header] = AffineExpr.var(n)
                self.structure[lp.header] = [ge(n, 0)]
                continue
            i = ind.name
            if abs(ind.step) == 1 and init is not None and not init.names() & grid_names:
                self.dims[lp.header] = [i]
                self.counter[lp.header] = (AffineExpr.var(i) - init) * ind.step
                self.structure[lp.header] = [ge(self.counter[lp.header], 0)]
            else:
                n = f"n_{i}"
                self.dims[lp.header] = [n, i]
                self.counter[lp.header] = AffineExpr.var(n)
                cons = [ge(n, 0)]
                if init is not None:
                    cons.append(eq(i, init + AffineExpr.var(n) * ind.step))
                self.structure[lp.header] = cons

    def nest(self, block: str) -> list[LoopInfo]:
        return sorted((lp for lp in self.infos if block in lp.body), key=lambda lp: lp.depth)

    def outer_dims(self, lp: LoopInfo) -> list[str]:
        chain = []
        p = lp.parent
        while p is not None:
            chain.append(self.by_header[p])
            p = self.by_header[p].parent
        return [d for q in reversed(chain) for d in self.dims.get(q.header, [])]


class _Divergent:
    """Phase of a block reached along paths with different barrier counts."""

    def __add__(self, other):
        return self

    def substitute(self, mapping):
        return self


DIVERGENT = _Divergent()


def _agree(values: list) -> AffineExpr | _Divergent:
    first = values[0]
    if any(v is DIVERGENT or v != first for v in values):
        return DIVERGENT
    return first


def _phases(f: Function, loops: _Loops, reach: set[str]) -> tuple[dict[str, AffineExpr], dict[str, int], list[str]]:
    """Barrier count on entry to each block, with ``ph_<header>`` standing for a loop's
    completed iterations times its barriers per iteration."""
    blocks = f.block_map()
    preds = f.predecessors()
    barriers = {b: sum(1 for i in blocks[b].instrs if i.opcode == "barrier") for b in reach}
    phase_in: dict[str, AffineExpr] = {}
    per_iter: dict[str, int] = {}
    trips: list[str] = []
    placeholder = {h: f"ph_{model_name(h)}" for h in loops.by_header}

    def out_of(p: str, b: str) -> AffineExpr | None:
        if p not in phase_in:
            return None
        v = phase_in[p] + barriers[p]
        for lp in loops.nest(p):
            if b in lp.body:
                continue
            if lp.header not in per_iter:
                return None
            k = per_iter[lp.header]
            if k:
                t = f"trip_{model_name(lp.header)}"
                if t not in trips:
                    trips.append(t)
                v = v.substitute({placeholder[lp.header]: AffineExpr.var(t) * k})
            else:
                v = v.substitute({placeholder[lp.header]: 0})
        return v

    pending = [b for b in reverse_postorder(f)]
    while pending:
        progress = False
        for b in list(pending):
            if b == f.entry.label:
                phase_in[b] = AffineExpr.const(0)
            else:
                lp = loops.by_header.get(b)
                incoming = [p for p in preds[b] if p in reach and not (lp and p in lp.body)]
                vals = [out_of(p, b) for p in incoming]
                if any(v is None for v in vals):
                    continue
                base = _agree(vals)
                phase_in[b] = base + AffineExpr.var(placeholder[b]) if lp else base
            pending.remove(b)
            progress = True
            for lp in loops.infos:
                if lp.header in per_iter or any(x not in phase_in for x in lp.latches):
                    continue
                ds = {phase_in[x] + barriers[x] - phase_in[lp.header] for x in lp.latches
                      if phase_in[x] is not DIVERGENT}
                if phase_in[lp.header] is DIVERGENT:
                    ds = {AffineExpr.const(0)} if all(barriers[x] == 0 for x in lp.body) else set()
                if len(ds) != 1 or not (d := ds.pop()).is_constant():
                    raise UnsupportedConstruct(
                        f"loop at {lp.header}: barriers per iteration vary (barrier inside a nested loop)")
                per_iter[lp.header] = d.constant
        if not progress:
            raise UnsupportedConstruct(f"cannot order barriers for blocks {pending}")
    return phase_in, per_iter, trips


def _guards(f, prop, block: str, dom, preds, loops: _Loops, defs):
    """(block, condition SSA, truth) for branches whose outcome is known at ``block``."""
    blocks = f.block_map()
    nest = {lp.header for lp in loops.nest(block)}
    out = []
    for d in sorted(dom[block]):
        t = blocks[d].terminator
        if t.opcode != "cond_br" or t.targets[0] == t.targets[1]:
            continue
        if not {lp.header for lp in loops.nest(d)} <= nest:
            continue
        for s, truth in zip(t.targets, (True, False)):
            if preds[s] == [d] and s in dom[block]:
                out.append((d, t.operands[0], truth))
    return out


def extract_model(f: Function, section_hints: dict[str, str] | None = None) -> KernelModel:
    for _, _, ins in f.instructions():
        if ins.opcode.startswith("atomic."):
            raise UnsupportedConstruct(f"line {ins.line}: atomics are not modeled")
        if ins.opcode == "indirectbr":
            raise UnsupportedConstruct(f"line {ins.line}: indirect branch")
        if ins.opcode == "call" and ins.intrinsic.startswith("@"):
            raise UnsupportedConstruct(f"line {ins.line}: call to {ins.intrinsic} (possible recursion)")
    f = f.with_launch(f.grid or (1,), f.block or (1,))
    grid = grid_config(f)
    promoted = control_loads(f)
    prop = propagate(f, promoted)
    infos = find_loops(f, prop)
    defs = f.definitions()
    reach = reachable(f)
    dom = dominators(f)
    preds = f.predecessors()
    order = {b: i for i, b in enumerate(reverse_postorder(f))}
    notes: list[str] = []

    params = [model_name(p) for p in f.scalar_params]
    assumptions: list[Constraint] = []
    arrays = f.arrays
    promoted_loads = [defs[n][2] for n in sorted(promoted, key=lambda n: (order[defs[n][0].label], defs[n][1]))]
    for ins in promoted_loads:
        p = model_name(ins.result)
        params.append(p)
        arr, idx = memory_target(ins, prop)
        decl = arrays[arr]
        if decl.value_range is not None:
            lo, hi = decl.value_range
            assumptions += [ge(p, lo.rename({n: model_name(n) for n in lo.names()})),
                            lt(p, hi.rename({n: model_name(n) for n in hi.names()}))]
        for other in promoted_loads:
            if other is ins or not decl.nondecreasing:
                continue
            arr2, idx2 = memory_target(other, prop)
            if arr2 != arr or len(idx) != 1 or not all(isinstance(x, Affine) for x in idx + idx2):
                continue
            d = idx2[0].expr - idx[0].expr
            if d.is_constant() and d.constant > 0:
                assumptions.append(le(p, model_name(other.result)))

    grid_names = set(grid.names)
    loops = _Loops(infos, grid_names, set(params))
    phase_in, per_iter, trips = _phases(f, loops, reach)
    secs = sections(f, section_hints)
    times = {}
    for sec in secs:
        nest = loops.nest(sec.block)
        if phase_in[sec.block] is DIVERGENT:
            raise UnsupportedConstruct(f"paths into {sec.block} execute different numbers of barriers")
        subst = {f"ph_{model_name(lp.header)}": loops.counter[lp.header] * per_iter[lp.header]
                 for lp in nest}
        phase = (phase_in[sec.block] + sec.segment).substitute(subst)
        vec = [phase, AffineExpr.const(order[nest[0].header if nest else sec.block])]
        anchors = [lp.header for lp in nest[1:]] + [sec.block]
        for lp, a in zip(nest, anchors):
            vec += [loops.counter[lp.header], AffineExpr.const(order[a])]
        vec.append(AffineExpr.const(sec.segment))
        times[sec.label] = tuple(vec)
    used = set().union(*(e.names() for t in times.values() for e in t))
    for t in trips:
        if t in used:
            params.append(t)
            assumptions.append(ge(t, 0))
    param_set = set(params)

    refs: dict[str, ArrayRef] = {}
    for name, decl in arrays.items():
        exts = tuple(e.rename({n: model_name(n) for n in e.names()}) for e in decl.extents)
        space = MemSpace.SHARED if decl.space == "shared" else MemSpace.GLOBAL
        refs[name] = ArrayRef(name, space, len(exts), decl.elem, exts)

    statements = []
    for sec in secs:
        nest = loops.nest(sec.block)
        dims = list(grid.names) + [d for lp in nest for d in loops.dims[lp.header]]
        allowed = grid_names | param_set | set(dims)
        base: list[Constraint] = []
        for lp in nest:
            base += loops.structure[lp.header]
        dnf = [base]
        for d, cond, truth in _guards(f, prop, sec.block, dom, preds, loops, defs):
            c = condition_dnf(f, prop, cond, truth, defs)
            names = set().union(*(x.names() for conj in c for x in conj)) if c else set()
            if c is None or not names <= allowed:
                notes.append(f"{sec.label}: dropped non-affine guard from block {d}")
                continue
            dnf = [a + b for a in dnf for b in c]
        domain = IntSet(sec.label, dims, [Conjunct(c) for c in dnf], params)

        reads, writes = [], []
        for ins in sec.accesses:
            arr, idx = memory_target(ins, prop)
            ref = refs[arr]
            if len(idx) != ref.arity:
                raise UnsupportedConstruct(f"line {ins.line}: {arr} indexed with {len(idx)} subscripts")
            outs = [f"{arr}_{k}" for k in range(ref.arity)]
            outs = [o if o not in allowed else o + "'" for o in outs]
            cons = []
            for o, e, ext in zip(outs, idx, ref.extents):
                if isinstance(e, Affine) and e.expr.names() <= allowed:
                    cons.append(eq(o, e.expr))
                else:
                    cons += [ge(o, 0), lt(o, ext)]
            rel = IntRel.from_constraints(sec.label, dims, arr, outs, cons, params)
            (writes if ins.opcode == "store" else reads).append(Access(ref, rel))
        statements.append(Statement(sec.label, domain, reads, writes))


    model = KernelModel(
        name=f.name,
        params=tuple(params),
        param_bounds={},
        assumptions=tuple(assumptions),
        arrays=refs,
        statements=statements,
        grid=grid,
        schedule=PhasedSchedule(times),
        notes=notes,
    )
    from ..modeltext import derive_param_bounds
    model.param_bounds = derive_param_bounds(params, assumptions)
    return model.validate()
