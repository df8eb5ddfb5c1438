"""Expression propagation: SSA values as affine forms or opaque data.

Affine forms range over model names: grid dims (``tx``, ``bx``...), scalar
kernel parameters, loop-header phis and loads promoted to parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

from ..isetcore import AffineExpr
from .cfg import natural_loops, reverse_postorder
from .ir import Function, Instruction, IrError, Ref

INTRINSIC_DIMS = {
    "tid.x": "tx", "tid.y": "ty", "tid.z": "tz",
    "bid.x": "bx", "bid.y": "by", "bid.z": "bz",
}
AXIS = {"x": 0, "y": 1, "z": 2}


class UnsupportedIdPattern(IrError):
    pass


@dataclass(frozen=True)
class Affine:
    expr: AffineExpr

    def __str__(self):
        return f"Affine({self.expr})"


@dataclass(frozen=True)
class Opaque:
    source: str  # e.g. "load colInd[ptr + tx]" or "mul of non-constants"
    array: str | None = None
    index: tuple = ()

    @property
    def is_load(self) -> bool:
        return self.array is not None

    def __str__(self):
        return f"Opaque({self.source})"


PropagatedExpr = Union[Affine, Opaque]


def model_name(ssa: str) -> str:
    """Identifier used for an SSA value inside integer sets."""
    return ssa.replace(".", "_")


@dataclass
class Propagation:
    values: dict[str, PropagatedExpr] = field(default_factory=dict)
    pointers: dict[str, tuple[str, tuple]] = field(default_factory=dict)  # getelem -> (array, index)
    id_tainted: set[str] = field(default_factory=set)
    atoms: dict[str, str] = field(default_factory=dict)  # model name -> what it stands for

    def __getitem__(self, name: str) -> PropagatedExpr:
        return self.values[name]

    def operand(self, op) -> PropagatedExpr:
        if isinstance(op, Ref):
            return self.values[op.name]
        if isinstance(op, bool) or isinstance(op, int):
            return Affine(AffineExpr.const(int(op)))
        return Opaque(f"literal {op}")


def _fmt(p: PropagatedExpr) -> str:
    return str(p.expr) if isinstance(p, Affine) else p.source


def propagate(f: Function, promote: Iterable[str] = ()) -> Propagation:
    """Resolve every SSA value; loads named in ``promote`` become parameters."""
    promote = set(promote)
    loops = natural_loops(f)
    headers = {lp.header for lp in loops}
    blocks = f.block_map()
    out = Propagation()
    for p in f.params:
        if p.array is None:
            out.values[p.name] = Affine(AffineExpr.var(model_name(p.name)))
            out.atoms[model_name(p.name)] = f"parameter %{p.name}"
    for label in reverse_postorder(f):
        b = blocks[label]
        for ins in b.instrs:
            if ins.result is None:
                continue
            out.values[ins.result] = _value(f, ins, out, label in headers, promote)
            if any(u in out.id_tainted for u in ins.uses()) and ins.opcode != "load" \
                    or ins.opcode == "call" and ins.intrinsic in INTRINSIC_DIMS:
                out.id_tainted.add(ins.result)
    return out


def _value(f: Function, ins: Instruction, st: Propagation, in_header: bool, promote) -> PropagatedExpr:
    op = ins.opcode
    if op == "call":
        if ins.intrinsic in INTRINSIC_DIMS:
            d = INTRINSIC_DIMS[ins.intrinsic]
            st.atoms[d] = ins.intrinsic
            return Affine(AffineExpr.var(d))
        kind, axis = ins.intrinsic.split(".") if "." in ins.intrinsic else ("", "")
        ext = f.block if kind == "blockdim" else f.grid if kind == "griddim" else None
        if ext is not None:
            return Affine(AffineExpr.const(ext[AXIS[axis]]))
        if kind in ("blockdim", "griddim"):
            name = f"{kind}_{axis}"
            st.atoms[name] = ins.intrinsic
            return Affine(AffineExpr.var(name))
        return Opaque(f"call {ins.intrinsic}")
    if op == "phi":
        if in_header:
            name = model_name(ins.result)
            st.atoms[name] = f"loop phi %{ins.result}"
            return Affine(AffineExpr.var(name))
        return Opaque(f"join phi %{ins.result}")
    if op in ("add", "sub"):
        a, b = (st.operand(x) for x in ins.operands)
        if isinstance(a, Affine) and isinstance(b, Affine):
            return Affine(a.expr + b.expr if op == "add" else a.expr - b.expr)
        return Opaque(f"{op} of {_fmt(a)} and {_fmt(b)}")
    if op == "mul":
        a, b = (st.operand(x) for x in ins.operands)
        if isinstance(a, Affine) and isinstance(b, Affine) and (a.expr.is_constant() or b.expr.is_constant()):
            return Affine(a.expr * b.expr)
        return Opaque(f"mul of {_fmt(a)} and {_fmt(b)}")
    if op == "shl":
        a, b = (st.operand(x) for x in ins.operands)
        if isinstance(a, Affine) and isinstance(b, Affine) and b.expr.is_constant() and b.expr.constant >= 0:
            return Affine(a.expr * (1 << b.expr.constant))
        return Opaque(f"shl of {_fmt(a)} and {_fmt(b)}")
    if op == "load":
        if ins.result in promote:
            name = model_name(ins.result)
            st.atoms[name] = f"value loaded into %{ins.result}"
            return Affine(AffineExpr.var(name))
        arr, idx = memory_target(ins, st)
        return Opaque(f"load {arr}[{', '.join(_fmt(i) for i in idx)}]", arr, idx)
    if op == "getelem":
        idx = tuple(st.operand(x) for x in ins.index)
        st.pointers[ins.result] = (ins.array, idx)
        return Opaque(f"pointer into {ins.array}")
    if op == "select":
        return Opaque("select")
    if op == "icmp":
        return Opaque(f"icmp {ins.pred}")
    return Opaque(op)


def memory_target(ins: Instruction, st: Propagation) -> tuple[str, tuple]:
    """Array and propagated index of a load/store (direct or through getelem)."""
    if ins.pointer is not None:
        if ins.pointer not in st.pointers:
            raise IrError(f"line {ins.line}: %{ins.pointer} is not a getelem pointer")
        return st.pointers[ins.pointer]
    return ins.array, tuple(st.operand(x) for x in ins.index)


# -- grid iterators ------------------------------------------------------------------


@dataclass
class GridBindings:
    bindings: dict[str, str]  # intrinsic -> dim name, for intrinsics actually used
    exprs: dict[str, AffineExpr]  # SSA name -> affine form over grid dims (id-dependent values)


def find_grid_iterators(f: Function) -> GridBindings:
    """Map thread/block id intrinsics to model dims and check id arithmetic stays affine."""
    prop = propagate(f)
    defs = f.definitions()
    bindings = {}
    exprs = {}
    for name, (_, _, ins) in defs.items():
        if ins.opcode == "call" and ins.intrinsic in INTRINSIC_DIMS:
            bindings[ins.intrinsic] = INTRINSIC_DIMS[ins.intrinsic]
    for name in prop.id_tainted:
        v = prop.values[name]
        ins = defs[name][2]
        if isinstance(v, Affine):
            exprs[name] = v.expr
        elif ins.opcode in ("add", "sub", "mul", "shl", "select") or ins.opcode == "phi" and v.source.startswith("join"):
            raise UnsupportedIdPattern(
                f"line {ins.line}: thread/block id flows through a non-affine {ins.opcode} (%{name})")
    return GridBindings(bindings, exprs)
