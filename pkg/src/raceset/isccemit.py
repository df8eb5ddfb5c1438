"""Render kernel models as iscc scripts and dependence reports as text."""

from __future__ import annotations

from dataclasses import dataclass, field

from .depcheck import DependenceReport, Summary
from .isetcore import IntRel
from .kmodel import KernelModel
from .notation import format_expr, format_tuple, rel_pieces, set_pieces

TEST_TAIL = """\
Before := Schedule << Schedule;
RaW := (Write . (Read^-1)) * Before;
WaW := (Write . (Write^-1)) * Before;
WaR := (Read . (Write^-1)) * Before;
RaW;
WaW;
WaR;
"""


@dataclass
class IsccScript:
    name: str
    prologue: list[str] = field(default_factory=list)
    sections: list[tuple[str, str]] = field(default_factory=list)  # (variable, value)
    tail: str = TEST_TAIL

    def section(self, name: str) -> str:
        for k, v in self.sections:
            if k == name:
                return v
        raise KeyError(name)

    @property
    def text(self) -> str:
        lines = [f"# {x}" if x else "#" for x in self.prologue]
        lines += [f"{k} := {v};" for k, v in self.sections]
        return "\n".join(lines) + "\n" + self.tail

    def __str__(self) -> str:
        return self.text


def _braces(header: str, pieces: list[str]) -> str:
    if not pieces:
        return f"{header}{{ }}"
    if len(pieces) == 1:
        return f"{header}{{ {pieces[0]} }}"
    body = ";\n  ".join(pieces)
    return f"{header}{{\n  {body}\n}}"


def emit(model: KernelModel) -> IsccScript:
    """Domain, Read, Write and Schedule definitions plus the dependence test."""
    header = f"[{', '.join(model.params)}] -> " if model.params else ""
    g = model.grid
    prologue = [f"kernel {model.name}"]
    if g.names:
        dims = ", ".join(f"{n} < {e}" for n, e in g.block_dims + g.thread_dims)
        scope = "block" if g.barrier_span is None else f"across {', '.join(g.barrier_span) or 'nothing'}"
        prologue.append(f"grid: {dims}; barriers synchronize {scope}")
    prologue += [f"note: {n}" for n in model.notes]

    domain = []
    for s in model.statements:
        domain += set_pieces(model.full_domain(s))
    accesses: dict[str, list[str]] = {"read": [], "write": []}
    for s in model.statements:
        for kind, a in s.accesses():
            accesses[kind.value] += rel_pieces(_with_params(a.rel, model.params))
    schedule = []
    for s in model.statements:
        t = model.schedule.padded(s.label)
        order = list(s.dims) + list(model.params)
        schedule.append(f"{format_tuple(s.label, s.dims)} -> [{', '.join(format_expr(e, order) for e in t)}]")

    sections = [
        ("Domain", _braces(header, domain)),
        ("Read", _braces(header, accesses["read"]) + " * Domain"),
        ("Write", _braces(header, accesses["write"]) + " * Domain"),
        ("Schedule", _braces(header, schedule)),
    ]
    return IsccScript(model.name, prologue, sections)


def _with_params(rel: IntRel, params) -> IntRel:
    return IntRel(rel.in_space, rel.in_dims, rel.out_space, rel.out_dims, rel.disjuncts, params)


def _point(label: str, point: dict[str, int]) -> str:
    return f"{label}[{', '.join(f'{k}={v}' for k, v in point.items())}]"


def emit_report_text(report: DependenceReport) -> str:
    """Stable plain-text rendering: verdict, per-pair lines, witnesses, reasons."""
    out = [f"kernel {report.model} ({report.mode} check)"]
    for p in report.pairs:
        out.append(f"  {p.kind.value} {p.source} -> {p.target} on {p.array}: {p.verdict.status.value}")
    for w in report.witnesses:
        cell = ", ".join(str(c) for c in w.cell)
        params = ", ".join(f"{k}={v}" for k, v in sorted(w.params.items()))
        out.append(f"  witness: {_point(w.source, w.source_point)} and {_point(w.target, w.target_point)}"
                   f" touch {w.array}[{cell}]" + (f" with {params}" if params else ""))
    for r in report.reasons:
        out.append(f"  reason: {r}")
    for n in report.notes:
        out.append(f"  note: {n}")
    out.append(f"verdict: {report.verdict.value}")
    return "\n".join(out) + "\n"


__all__ = ["IsccScript", "TEST_TAIL", "emit", "emit_report_text", "Summary"]
