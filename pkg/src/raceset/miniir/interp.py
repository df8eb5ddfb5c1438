"""Concrete interpreter for mini-IR kernels, producing an access log.

Threads run round-robin: every thread advances to its next barrier (or to
completion) before any thread passes a barrier, which is one legal schedule.
Races are found afterwards from the log, so the chosen interleaving only
affects data values, not which access pairs are unordered.
"""

from __future__ import annotations

import itertools
import operator

from ..kmodel import AccessKind
from ..oracle import (
    STEP_LIMIT,
    AccessLogEntry,
    ConcreteInstance,
    InvalidInstance,
    OutOfBounds,
    StepLimitExceeded,
)
from .extract import sections
from .ir import Function, IrError, Ref
from .propagate import model_name

_INT_OPS = {
    "add": operator.add, "sub": operator.sub, "mul": operator.mul,
    "shl": operator.lshift, "and": operator.and_, "or": operator.or_, "xor": operator.xor,
}
_FLOAT_OPS = {
    "fadd": operator.add, "fsub": operator.sub, "fmul": operator.mul, "fdiv": operator.truediv,
}
_CMP = {
    "eq": operator.eq, "ne": operator.ne, "slt": operator.lt, "sle": operator.le,
    "sgt": operator.gt, "sge": operator.ge, "ult": operator.lt, "ule": operator.le,
    "ugt": operator.gt, "uge": operator.ge,
}


class _Memory:
    def __init__(self, name: str, extents: tuple[int, ...], data=None, shared=False):
        self.name, self.extents, self.shared = name, extents, shared
        size = 1
        for e in extents:
            size *= e
        if data is None:
            self.cells = [0] * size
        else:
            flat = list(_flatten(data))
            if len(flat) < size:
                flat += [0] * (size - len(flat))
            self.cells = flat

    def offset(self, cell: tuple[int, ...], where: str) -> int:
        if len(cell) != len(self.extents) or any(
                not isinstance(c, int) or not 0 <= c < e for c, e in zip(cell, self.extents)):
            raise OutOfBounds(self.name, cell, where)
        off = 0
        for c, e in zip(cell, self.extents):
            off = off * e + c
        return off


def _flatten(x):
    if isinstance(x, (list, tuple)):
        for y in x:
            yield from _flatten(y)
    else:
        yield x


def run_function(instance: ConcreteInstance, f: Function) -> list[AccessLogEntry]:
    """Execute every thread of the launch and return the access log."""
    grid = tuple(instance.grid or f.grid or (1,))
    block = tuple(instance.block or f.block or (1,))
    grid = grid + (1,) * (3 - len(grid))
    block = block + (1,) * (3 - len(block))
    params = {}
    for name in f.scalar_params:
        if name not in instance.params:
            raise InvalidInstance(f"no value for parameter %{name}")
        params[name] = int(instance.params[name])
    env_params = {model_name(k): v for k, v in params.items()}
    globals_ = {}
    for name, decl in f.arrays.items():
        if decl.space == "shared":
            continue
        ext = tuple(e.evaluate(params) for e in decl.extents)
        globals_[name] = _Memory(name, ext, instance.arrays.get(name))
    shared_decls = {n: d for n, d in f.arrays.items() if d.space == "shared"}
    labels = {(s.block, s.segment): s.label for s in sections(f)}
    scope = next((i.scope for _, _, i in f.instructions() if i.opcode == "barrier"), "block")
    width = int(scope[4:]) if scope.startswith("warp") else None

    log: list[AccessLogEntry] = []
    serial = itertools.count()
    threads = []
    for bz, by, bx in itertools.product(range(grid[2]), range(grid[1]), range(grid[0])):
        mem = dict(globals_)
        for n, d in shared_decls.items():
            mem[n] = _Memory(n, tuple(e.evaluate(params) for e in d.extents), shared=True)
        for tz, ty, tx in itertools.product(range(block[2]), range(block[1]), range(block[0])):
            lin = tx + block[0] * (ty + block[1] * tz)
            group = (bx, by, bz) + ((lin // width,) if width else ())
            ids = {"tid.x": tx, "tid.y": ty, "tid.z": tz, "bid.x": bx, "bid.y": by, "bid.z": bz,
                   "blockdim.x": block[0], "blockdim.y": block[1], "blockdim.z": block[2],
                   "griddim.x": grid[0], "griddim.y": grid[1], "griddim.z": grid[2]}
            threads.append(_thread(f, ids, params, env_params, mem, (bx, by, bz), (tz, ty, tx),
                                   group, labels, log, serial))
    alive = threads
    while alive:
        alive = [t for t in alive if next(t, StopIteration) is not StopIteration]
    return log


def _thread(f, ids, params, env_params, mem, bcoord, tcoord, group, labels, log, serial):
    blocks = f.block_map()
    vals: dict[str, object] = dict(params)
    snap: dict[str, int] = dict(env_params)
    for key, dim in (("tid.x", "tx"), ("tid.y", "ty"), ("tid.z", "tz"),
                     ("bid.x", "bx"), ("bid.y", "by"), ("bid.z", "bz")):
        snap[dim] = ids[key]
    phase = 0
    steps = 0
    prev, label = None, f.entry.label

    def value(op):
        if isinstance(op, Ref):
            return vals[op.name]
        return op

    def record(name, v):
        vals[name] = v
        if isinstance(v, int) and not isinstance(v, bool):
            snap[model_name(name)] = v

    def target(ins):
        if ins.pointer is not None:
            return vals[ins.pointer]
        return ins.array, tuple(value(i) for i in ins.index)

    while True:
        b = blocks[label]
        phis = [i for i in b.instrs if i.opcode == "phi"]
        incoming = {}
        for ins in phis:
            src = [v for v, lab in ins.incoming if lab == prev]
            if not src:
                raise IrError(f"phi %{ins.result} has no value for edge from {prev}")
            incoming[ins.result] = value(src[0])
        for n, v in incoming.items():
            record(n, v)
        segment = 0
        nxt = None
        for ins in b.instrs[len(phis):]:
            steps += 1
            if steps > STEP_LIMIT:
                raise StepLimitExceeded(f"thread {bcoord}{tcoord} exceeded {STEP_LIMIT} steps")
            op = ins.opcode
            if op in _INT_OPS:
                a, c = (value(x) for x in ins.operands)
                record(ins.result, _INT_OPS[op](int(a), int(c)))
            elif op in _FLOAT_OPS:
                a, c = (value(x) for x in ins.operands)
                record(ins.result, _FLOAT_OPS[op](float(a), float(c)))
            elif op == "icmp":
                a, c = (value(x) for x in ins.operands)
                record(ins.result, int(_CMP[ins.pred](a, c)))
            elif op == "select":
                c, a, d = (value(x) for x in ins.operands)
                record(ins.result, a if c else d)
            elif op == "call":
                if ins.intrinsic not in ids:
                    raise IrError(f"line {ins.line}: cannot execute call {ins.intrinsic}")
                record(ins.result, ids[ins.intrinsic])
            elif op == "getelem":
                vals[ins.result] = (ins.array, tuple(value(i) for i in ins.index))
            elif op in ("load", "store"):
                arr, cell = target(ins)
                m = mem[arr]
                off = m.offset(cell, f"line {ins.line}")
                idx_ops = ins.index if ins.pointer is None else _pointer_index(f, ins.pointer)
                names = tuple(o.name if isinstance(o, Ref) else str(o) for o in idx_ops)
                log.append(AccessLogEntry(
                    block=bcoord, thread=tcoord, phase=phase, serial=next(serial), array=arr,
                    cell=tuple(cell), kind=AccessKind.READ if op == "load" else AccessKind.WRITE,
                    group=group, shared=m.shared, statement=labels.get((label, segment), label),
                    point=dict(snap), index_names=names))
                if op == "load":
                    record(ins.result, m.cells[off])
                else:
                    m.cells[off] = value(ins.operands[0])
            elif op == "barrier":
                phase += 1
                segment += 1
                yield phase
            elif op == "br":
                nxt = ins.targets[0]
            elif op == "cond_br":
                nxt = ins.targets[0] if value(ins.operands[0]) else ins.targets[1]
            elif op == "ret":
                return
            elif op == "alloca_shared":
                pass
            else:
                raise IrError(f"line {ins.line}: cannot execute {op}")
        prev, label = label, nxt


def _pointer_index(f: Function, pointer: str):
    ins = f.definitions()[pointer][2]
    return ins.index
