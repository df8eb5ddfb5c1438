"""Loop recognition (inductions, steps, exit tests) and branch conditions as constraints."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..isetcore import AffineExpr, Constraint, eq, ge, gt, le, lt
from .cfg import LoopStructure, natural_loops
from .ir import Function, IrError, Ref
from .propagate import Affine, Propagation, model_name, propagate


class NonAffineBound(IrError):
    pass


class MultipleInductions(IrError):
    pass


@dataclass
class Induction:
    phi: str
    init: object  # PropagatedExpr of the value entering from outside the loop
    step: int

    @property
    def name(self) -> str:
        return model_name(self.phi)


@dataclass
class LoopExit:
    block: str
    target: str
    cond: str | None  # i1 SSA name deciding the exit, None for an unconditional break
    stay_if: bool | None  # value of ``cond`` that keeps iterating


@dataclass
class LoopInfo:
    header: str
    latches: list[str]
    body: set[str]
    parent: str | None
    depth: int
    induction: Induction | None
    exits: list[LoopExit] = field(default_factory=list)
    bound: list[list[Constraint]] = field(default_factory=list)  # DNF of staying in the loop

    @property
    def back_edges(self) -> list[tuple[str, str]]:
        return [(latch, self.header) for latch in self.latches]


# -- conditions ------------------------------------------------------------------------

_RELATION = {
    "slt": lt, "ult": lt, "sle": le, "ule": le,
    "sgt": gt, "ugt": gt, "sge": ge, "uge": ge, "eq": eq,
}
_NEGATED = {
    "slt": "sge", "ult": "uge", "sle": "sgt", "ule": "ugt",
    "sgt": "sle", "ugt": "ule", "sge": "slt", "uge": "ult", "eq": "ne", "ne": "eq",
}


def _and(a, b):
    return [x + y for x in a for y in b]


def condition_dnf(f: Function, prop: Propagation, cond, truth: bool, _defs=None):
    """DNF (list of constraint lists) for ``cond == truth``, or None if not affine."""
    defs = _defs if _defs is not None else f.definitions()
    if not isinstance(cond, Ref):
        if isinstance(cond, int):
            return [[]] if bool(cond) == truth else []
        return None
    if cond.name not in defs:
        return None
    ins = defs[cond.name][2]
    if ins.opcode == "icmp":
        a, b = (prop.operand(x) for x in ins.operands)
        if not (isinstance(a, Affine) and isinstance(b, Affine)):
            return None
        pred = ins.pred if truth else _NEGATED[ins.pred]
        if pred == "ne":
            return [[lt(a.expr, b.expr)], [gt(a.expr, b.expr)]]
        return [[_RELATION[pred](a.expr, b.expr)]]
    if ins.opcode in ("and", "or"):
        x, y = (condition_dnf(f, prop, o, truth, defs) for o in ins.operands)
        if x is None or y is None:
            return None
        conjunctive = (ins.opcode == "and") == truth
        return _and(x, y) if conjunctive else x + y
    if ins.opcode == "xor":
        a, b = ins.operands
        if isinstance(b, int) and not isinstance(a, int):
            a, b = b, a
        if isinstance(a, int):
            return condition_dnf(f, prop, b, truth != bool(a), defs)
    return None


def control_loads(f: Function) -> set[str]:
    """Loads whose values reach branch conditions or loop-entry values."""
    defs = f.definitions()
    loops = natural_loops(f)
    seeds = []
    for b in f.blocks:
        t = b.terminator if b.instrs else None
        if t is not None and t.opcode == "cond_br":
            seeds += t.operands
    for lp in loops:
        for ins in f.block_map()[lp.header].instrs:
            if ins.opcode == "phi":
                seeds += [v for v, lab in ins.incoming if lab not in lp.body]
    out, seen = set(), set()
    stack = [s.name for s in seeds if isinstance(s, Ref)]
    while stack:
        n = stack.pop()
        if n in seen or n not in defs:
            continue
        seen.add(n)
        ins = defs[n][2]
        if ins.opcode == "load":
            out.add(n)
        elif ins.opcode in ("add", "sub", "mul", "shl", "select", "icmp", "and", "or", "xor"):
            stack += [o.name for o in ins.operands if isinstance(o, Ref)]
    return out


# -- loops ------------------------------------------------------------------------------


def _feeds_addresses(f: Function, prop: Propagation, body: set[str], name: str) -> bool:
    from .propagate import memory_target
    for b in f.blocks:
        if b.label not in body:
            continue
        for ins in b.instrs:
            if ins.is_memory():
                _, idx = memory_target(ins, prop)
                if any(isinstance(i, Affine) and name in i.expr.names() for i in idx):
                    return True
    return False


def find_loops(f: Function, prop: Propagation | None = None) -> list[LoopInfo]:
    """Natural loops with their induction variable, step and exit tests."""
    structures = natural_loops(f)
    if prop is None:
        prop = propagate(f, control_loads(f))
    blocks = f.block_map()
    defs = f.definitions()
    out = []
    for lp in structures:
        exits = _exits(lp, blocks)
        exit_conds = set()
        for ex in exits:
            if ex.cond is not None:
                dnf = condition_dnf(f, prop, Ref(ex.cond), True, defs)
                if dnf is None:
                    raise NonAffineBound(f"loop at {lp.header}: exit test %{ex.cond} is not affine")
                for conj in dnf:
                    for c in conj:
                        exit_conds |= c.names()
        candidates = []
        for ins in blocks[lp.header].instrs:
            if ins.opcode != "phi":
                break
            inits = [v for v, lab in ins.incoming if lab not in lp.body]
            nexts = [v for v, lab in ins.incoming if lab in lp.body]
            name = model_name(ins.result)
            steps = set()
            for v in nexts:
                nv = prop.operand(v)
                d = nv.expr - AffineExpr.var(name) if isinstance(nv, Affine) else None
                steps.add(d.constant if d is not None and d.is_constant() else None)
            step = steps.pop() if len(steps) == 1 else None
            if step is None or step == 0 or len(inits) != 1:
                if name in exit_conds:
                    raise NonAffineBound(f"loop at {lp.header}: %{ins.result} does not advance by a constant")
                continue
            candidates.append(Induction(ins.result, prop.operand(inits[0]), step))
        addressing = [c for c in candidates if _feeds_addresses(f, prop, lp.body, c.name)]
        if len(addressing) > 1:
            raise MultipleInductions(
                f"loop at {lp.header}: {', '.join('%' + c.phi for c in addressing)} all feed addresses")
        tested = [c for c in candidates if c.name in exit_conds]
        pick = (tested or addressing or candidates or [None])[0]
        bound = [[]]
        for ex in exits:
            if ex.cond is not None:
                bound = _and(bound, condition_dnf(f, prop, Ref(ex.cond), ex.stay_if, defs))
        out.append(LoopInfo(lp.header, lp.latches, lp.body, lp.parent.header if lp.parent else None,
                            lp.depth, pick, exits, bound))
    return out


def _exits(lp: LoopStructure, blocks) -> list[LoopExit]:
    out = []
    for label in sorted(lp.body):
        t = blocks[label].terminator
        outside = [s for s in t.targets if s not in lp.body]
        if not outside:
            continue
        if t.opcode == "cond_br" and len(outside) == 1 and isinstance(t.operands[0], Ref):
            stay = t.targets[0] in lp.body
            out.append(LoopExit(label, outside[0], t.operands[0].name, stay))
        else:
            out.append(LoopExit(label, outside[0], None, None))
    return out
