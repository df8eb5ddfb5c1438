"""Line-oriented text format for hand-written kernel models.

Example::

    kernel polyp
    params: n
    assume: n >= 1
    arrays:
      global A[n] f32
      global C[n, n] f32
    statement S [k]:
      domain: 0 <= k < n
      write C[k, k]
    schedule:
      S -> [0, k, 0]

Grid lines (``block bx < 2``, ``thread tx < 4 as tid.x``, ``barrier block``
or ``barrier warp tx``) go under ``grid:``. Access lines may restrict the
access with ``: formula`` and may name free cell coordinates, which then
range over everything the formula allows. ``#`` starts a comment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .isetcore import AffineExpr, Conjunct, Constraint, IntRel, IntSet
from .kmodel import (
    Access,
    ArrayRef,
    GridConfig,
    KernelModel,
    MemSpace,
    PhasedSchedule,
    Statement,
    derive_param_bounds,
)
from .notation import (
    NotationError,
    format_conjunct,
    format_expr,
    parse_expr_list,
    parse_formula,
    parse_rel,
    rel_pieces,
)


class ModelTextError(ValueError):
    def __init__(self, msg: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<model>'}:{line}: " if line is not None else ""
        super().__init__(where + msg)


_STMT = re.compile(r"statement\s+([A-Za-z_]\w*)\s*\[([^\]]*)\]\s*:?\s*$")
_ARRAY = re.compile(r"(global|shared|local)\s+([A-Za-z_]\w*)\s*\[(.*)\]\s*([A-Za-z_]\w*)?\s*$")
_ACCESS = re.compile(r"(read|write)\s+([A-Za-z_]\w*)\s*(\[.*)$")
_SCHED = re.compile(r"([A-Za-z_]\w*)\s*->\s*(\[.*\])\s*$")
_GRIDDIM = re.compile(r"(block|thread)\s+([A-Za-z_]\w*)\s*<\s*(\d+)(?:\s+as\s+([a-z]+\.[xyz]))?\s*$")


@dataclass
class _Stmt:
    label: str
    dims: list[str]
    domain: list[Conjunct]
    reads: list[tuple[str, IntRel]]
    writes: list[tuple[str, IntRel]]
    line: int


def _split_comment(line: str) -> str:
    return line.split("#", 1)[0].rstrip()


def _conj_only(disj: list[Conjunct], what: str, lineno: int) -> list[Constraint]:
    if len(disj) != 1 or disj[0].exists:
        raise ModelTextError(f"{what} must be a plain conjunction", lineno)
    return list(disj[0].constraints)


def parse_model(text: str, path: str | None = None) -> KernelModel:
    name = "kernel"
    params: list[str] = []
    assume: list[Constraint] = []
    arrays: dict[str, ArrayRef] = {}
    block_dims, thread_dims = [], []
    bindings: dict[str, str] = {}
    span: tuple[str, ...] | None = None
    stmts: list[_Stmt] = []
    times: dict[str, tuple[AffineExpr, ...]] = {}
    section = None
    cur: _Stmt | None = None

    def fail(msg, lineno):
        raise ModelTextError(msg, lineno, path)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _split_comment(raw).strip()
        if not line:
            continue
        try:
            if line.startswith("kernel "):
                name = line.split(None, 1)[1].strip()
                section = None
            elif line.startswith("params:"):
                params += [p.strip() for p in line[7:].split(",") if p.strip()]
                section = None
            elif line.startswith("assume:"):
                assume += _conj_only(parse_formula(line[7:], params), "assume", lineno)
                section = None
            elif line in ("grid:", "arrays:", "schedule:"):
                section = line[:-1]
                cur = None
            elif line.startswith("statement"):
                m = _STMT.match(line)
                if not m:
                    fail("malformed statement header", lineno)
                dims = [d.strip() for d in m.group(2).split(",") if d.strip()]
                cur = _Stmt(m.group(1), dims, [Conjunct()], [], [], lineno)
                stmts.append(cur)
                section = "statement"
            elif section == "grid":
                m = _GRIDDIM.match(line)
                if m:
                    (block_dims if m.group(1) == "block" else thread_dims).append((m.group(2), int(m.group(3))))
                    if m.group(4):
                        bindings[m.group(4)] = m.group(2)
                elif line == "barrier block":
                    span = None
                elif line.startswith("barrier warp"):
                    span = tuple(x.strip() for x in line[len("barrier warp"):].split(",") if x.strip())
                else:
                    fail(f"unrecognized grid line {line!r}", lineno)
            elif section == "arrays":
                m = _ARRAY.match(line)
                if not m:
                    fail(f"unrecognized array declaration {line!r}", lineno)
                exts = tuple(parse_expr_list(m.group(3), params))
                arrays[m.group(2)] = ArrayRef(m.group(2), MemSpace(m.group(1)), len(exts),
                                              m.group(4) or "i32", exts)
            elif section == "statement" and cur is not None:
                scope = set(params) | set(cur.dims)
                if line.startswith("domain:"):
                    more = parse_formula(line[7:], scope)
                    cur.domain = [Conjunct(a.constraints + b.constraints, a.exists + b.exists)
                                  for a in cur.domain for b in more]
                else:
                    m = _ACCESS.match(line)
                    if not m:
                        fail(f"unrecognized statement line {line!r}", lineno)
                    rel = parse_rel(f"{{ {cur.label}[{', '.join(cur.dims)}] -> {m.group(2)}{m.group(3)} }}",
                                    params)
                    (cur.reads if m.group(1) == "read" else cur.writes).append((m.group(2), rel))
            elif section == "schedule":
                m = _SCHED.match(line)
                if not m:
                    fail(f"unrecognized schedule line {line!r}", lineno)
                owner = next((s for s in stmts if s.label == m.group(1)), None)
                if owner is None:
                    fail(f"schedule for unknown statement {m.group(1)}", lineno)
                times[m.group(1)] = tuple(parse_expr_list(m.group(2), set(params) | set(owner.dims)))
            else:
                fail(f"unexpected line {line!r}", lineno)
        except NotationError as e:
            raise ModelTextError(str(e), lineno, path) from None

    grid = GridConfig(tuple(block_dims), tuple(thread_dims), bindings, span)
    statements = []
    for st in stmts:
        dom = IntSet(st.label, st.dims, st.domain, params)
        reads, writes = [], []
        for lst, out in ((st.reads, reads), (st.writes, writes)):
            for arr, rel in lst:
                if arr not in arrays:
                    raise ModelTextError(f"undeclared array {arr}", st.line, path)
                out.append(Access(arrays[arr], rel))
        statements.append(Statement(st.label, dom, reads, writes))
    model = KernelModel(
        name=name,
        params=tuple(params),
        param_bounds=derive_param_bounds(params, assume),
        assumptions=tuple(assume),
        arrays=arrays,
        statements=statements,
        grid=grid,
        schedule=PhasedSchedule(times),
    )
    try:
        return model.validate()
    except ValueError as e:
        raise ModelTextError(str(e), None, path) from None


def load_model(path: str) -> KernelModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read(), path)


# -- rendering --------------------------------------------------------------------


def _formula(disjuncts, dims, params) -> str:
    parts = [format_conjunct(d, dims, params) or "true" for d in disjuncts]
    if not parts:
        return "false"
    if len(parts) == 1:
        return parts[0]
    return " or ".join(f"({p})" for p in parts)


def _access_line(kind: str, rel: IntRel) -> list[str]:
    if len(rel.disjuncts) == 1:
        piece = rel_pieces(rel)[0]
        rhs = piece.split(" -> ", 1)[1]
        return [f"{kind} {rhs}"]
    dims = list(rel.in_dims) + list(rel.out_dims)
    body = _formula(rel.disjuncts, dims, rel.params)
    return [f"{kind} {rel.out_space}[{', '.join(rel.out_dims)}] : {body}"]


def render_model(model: KernelModel) -> str:
    out = [f"kernel {model.name}"]
    if model.params:
        out.append(f"params: {', '.join(model.params)}")
    order = list(model.params)
    for c in model.assumptions:
        out.append(f"assume: {format_conjunct(Conjunct([c]), [], order)}")
    g = model.grid
    if g.names:
        out.append("grid:")
        inv = {v: k for k, v in g.bindings.items()}
        for kind, dims in (("block", g.block_dims), ("thread", g.thread_dims)):
            for n, ext in dims:
                suffix = f" as {inv[n]}" if n in inv else ""
                out.append(f"  {kind} {n} < {ext}{suffix}")
        out.append("  barrier block" if g.barrier_span is None else f"  barrier warp {', '.join(g.barrier_span)}")
    if model.arrays:
        out.append("arrays:")
        for a in model.arrays.values():
            ext = ", ".join(format_expr(e, order) for e in (a.extents or ()))
            out.append(f"  {a.space.value} {a.name}[{ext}] {a.element_kind}")
    for s in model.statements:
        out.append(f"statement {s.label} [{', '.join(s.dims)}]:")
        out.append(f"  domain: {_formula(s.domain.disjuncts, s.dims, model.params)}")
        for kind, lst in (("read", s.reads), ("write", s.writes)):
            for a in lst:
                out += ["  " + x for x in _access_line(kind, a.rel)]
    if model.statements:
        out.append("schedule:")
        for s in model.statements:
            t = model.schedule.times[s.label]
            out.append(f"  {s.label} -> [{', '.join(format_expr(e, list(s.dims)) for e in t)}]")
    return "\n".join(out) + "\n"
