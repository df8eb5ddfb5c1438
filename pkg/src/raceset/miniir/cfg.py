"""Control-flow analysis: reachability, dominators, natural loops."""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import Function, IrError


class IrreducibleCfg(IrError):
    pass


def reachable(f: Function) -> set[str]:
    succ = {b.label: b.successors for b in f.blocks}
    seen = set()
    stack = [f.entry.label]
    while stack:
        b = stack.pop()
        if b in seen:
            continue
        seen.add(b)
        stack.extend(succ[b])
    return seen


def reverse_postorder(f: Function) -> list[str]:
    succ = {b.label: b.successors for b in f.blocks}
    seen: set[str] = set()
    post: list[str] = []

    def visit(b: str):
        seen.add(b)
        for s in succ[b]:
            if s not in seen:
                visit(s)
        post.append(b)

    visit(f.entry.label)
    return post[::-1]


def dominators(f: Function) -> dict[str, set[str]]:
    """Dominator sets of reachable blocks (iterative dataflow)."""
    order = reverse_postorder(f)
    preds = f.predecessors()
    every = set(order)
    dom = {b: set(every) for b in order}
    dom[order[0]] = {order[0]}
    changed = True
    while changed:
        changed = False
        for b in order[1:]:
            ps = [p for p in preds[b] if p in every]
            new = set.intersection(*(dom[p] for p in ps)) if ps else set()
            new = new | {b}
            if new != dom[b]:
                dom[b] = new
                changed = True
    return dom


@dataclass
class LoopStructure:
    header: str
    latches: list[str]
    body: set[str]
    parent: "LoopStructure | None" = None
    children: list["LoopStructure"] = field(default_factory=list)

    @property
    def depth(self) -> int:
        d, p = 1, self.parent
        while p is not None:
            d, p = d + 1, p.parent
        return d


def natural_loops(f: Function) -> list[LoopStructure]:
    """Natural loops, outermost first; raises IrreducibleCfg on a retreating non-back edge."""
    dom = dominators(f)
    order = reverse_postorder(f)
    pos = {b: i for i, b in enumerate(order)}
    preds = f.predecessors()
    blocks = f.block_map()
    by_header: dict[str, list[str]] = {}
    for b in order:
        for s in blocks[b].successors:
            if pos[s] <= pos[b]:
                if s not in dom[b]:
                    raise IrreducibleCfg(f"edge {b} -> {s} re-enters a loop without passing its header")
                by_header.setdefault(s, []).append(b)
    loops = []
    for h, latches in by_header.items():
        body = {h}
        stack = list(latches)
        while stack:
            x = stack.pop()
            if x in body:
                continue
            body.add(x)
            stack.extend(p for p in preds[x] if p in pos)
        loops.append(LoopStructure(h, sorted(latches, key=pos.get), body))
    loops.sort(key=lambda lp: (-len(lp.body), pos[lp.header]))
    for lp in loops:
        best = None
        for other in loops:
            if other is lp or not lp.body < other.body:
                continue
            if best is None or len(other.body) < len(best.body):
                best = other
        lp.parent = best
        if best is not None:
            best.children.append(lp)
    loops.sort(key=lambda lp: (lp.depth, pos[lp.header]))
    return loops


def loop_nest(block: str, loops: list[LoopStructure]) -> list[LoopStructure]:
    """Loops containing ``block``, outermost first."""
    inside = [lp for lp in loops if block in lp.body]
    return sorted(inside, key=lambda lp: lp.depth)
