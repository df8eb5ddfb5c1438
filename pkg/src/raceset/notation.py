"""isl/iscc-style text for sets and relations: printing and parsing.

Printed form::

    [n] -> { S[k] : 0 <= k < n; T[i, j] : 0 <= i < n and 0 <= j < n }
    [n] -> { S[k] -> C[k, k] }

Disjuncts of one space are printed as separate pieces; existentials as
``exists (e0 : ...)``. Multiplication by a literal may be written ``4it`` or
``4*it``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .isetcore.affine import AffineExpr, Constraint, eq, format_expr, ge, gt, le, lt
from .isetcore.sets import Conjunct, IntRel, IntSet, UnionRel, UnionSet, fresh_names, simplify_conjunct


class NotationError(ValueError):
    def __init__(self, msg: str, pos: int | None = None, text: str | None = None):
        self.pos = pos
        if pos is not None and text is not None:
            line = text.count("\n", 0, pos) + 1
            col = pos - (text.rfind("\n", 0, pos) + 1) + 1
            self.line, self.col = line, col
            msg = f"{msg} at line {line}, column {col}"
        else:
            self.line = self.col = None
        super().__init__(msg)


# -- printing --------------------------------------------------------------------


def _side(expr: AffineExpr, order: Sequence[str]) -> str:
    return format_expr(expr, order)


def format_constraint(c: Constraint, order: Sequence[str] = ()) -> str:
    e = c.expr
    pos = AffineExpr({k: v for k, v in e.terms if v > 0})
    neg = AffineExpr({k: -v for k, v in e.terms if v < 0})
    k = e.constant
    if c.is_eq:
        if not pos.terms:
            pos, neg, k = neg, pos, -k
        if k <= 0 or not neg.terms:
            return f"{_side(pos, order)} = {_side(neg - k, order)}"
        return f"{_side(pos + k, order)} = {_side(neg, order)}"
    if not neg.terms:
        if not pos.terms:
            return f"0 <= {k}"
        return f"{_side(pos, order)} >= {-k}"
    if not pos.terms:
        return f"{_side(neg, order)} <= {k}"
    if k < 0:
        return f"{_side(neg + (-k - 1), order)} < {_side(pos, order)}"
    return f"{_side(neg, order)} <= {_side(pos + k, order)}"


def _bound_chains(constraints: list[Constraint], dims: Sequence[str], order):
    """Pair ``L <= x`` and ``x <= U`` unit bounds into ``L <= x <= U`` chains."""
    used = set()
    chains = []
    for x in dims:
        lows, ups = [], []
        for i, c in enumerate(constraints):
            if c.is_eq or i in used:
                continue
            k = c.expr.coeff(x)
            if k == 1:
                lows.append(i)
            elif k == -1:
                ups.append(i)
        if len(lows) == 1 and len(ups) == 1:
            lo_c, up_c = constraints[lows[0]], constraints[ups[0]]
            lower = -(lo_c.expr - AffineExpr.var(x))
            upper = up_c.expr + AffineExpr.var(x)
            # keep chains readable: bounds may not mention other dims of this chain
            if x in lower.names() or x in upper.names():
                continue
            used.update((lows[0], ups[0]))
            if upper.terms and upper.constant == -1:
                chains.append(f"{_side(lower, order)} <= {x} < {_side(upper + 1, order)}")
            else:
                chains.append(f"{_side(lower, order)} <= {x} <= {_side(upper, order)}")
    return chains, used


def format_conjunct(d: Conjunct, dims: Sequence[str], params: Sequence[str] = (),
                    skip: Iterable[int] = ()) -> str:
    order = list(dims) + list(d.exists) + list(params)
    skip = set(skip)
    cons = [c for i, c in enumerate(d.constraints) if i not in skip]
    chains, used = _bound_chains(cons, list(dims) + list(d.exists), order)
    parts = list(chains)
    parts += [format_constraint(c, order) for i, c in enumerate(cons) if i not in used and c.is_eq]
    parts += [format_constraint(c, order) for i, c in enumerate(cons) if i not in used and not c.is_eq]
    body = " and ".join(parts)
    if d.exists:
        ex = ", ".join(d.exists)
        body = f"exists ({ex} : {body})" if body else ""
    return body


def _header(params: Sequence[str]) -> str:
    return f"[{', '.join(params)}] -> " if params else ""


def format_tuple(space: str, elems: Sequence[str]) -> str:
    return f"{space}[{', '.join(elems)}]"


def set_pieces(s: IntSet) -> list[str]:
    tup = format_tuple(s.space, s.dims)
    out = []
    for d in s.disjuncts:
        body = format_conjunct(d, s.dims, s.params)
        out.append(f"{tup} : {body}" if body else tup)
    return out


def rel_pieces(r: IntRel) -> list[str]:
    """Pieces with output coordinates shown as expressions where they are
    fixed by a unit equality over inputs and parameters."""
    out = []
    allowed = set(r.in_dims) | set(r.params)
    order = list(r.in_dims) + list(r.params)
    for d in r.disjuncts:
        cons = list(d.constraints)
        out_elems = []
        named = []
        if not d.exists:
            for o in r.out_dims:
                shown = None
                for i, c in enumerate(cons):
                    k = c.expr.coeff(o)
                    if not c.is_eq or abs(k) != 1:
                        continue
                    rest = c.expr - AffineExpr.var(o, k)
                    if rest.names() <= allowed:
                        value = rest * (-k)
                        shown = format_expr(value, order)
                        cons = [x.substitute({o: value}) for j, x in enumerate(cons) if j != i]
                        break
                out_elems.append(o if shown is None else shown)
                if shown is None:
                    named.append(o)
            dd = simplify_conjunct(Conjunct(cons), allowed | set(named)) or Conjunct(cons)
        else:
            out_elems = list(r.out_dims)
            named = list(r.out_dims)
            dd = d
        lhs = format_tuple(r.in_space, r.in_dims)
        rhs = format_tuple(r.out_space, out_elems)
        body = format_conjunct(dd, list(r.in_dims) + named, r.params)
        out.append(f"{lhs} -> {rhs} : {body}" if body else f"{lhs} -> {rhs}")
    return out


def format_set(s: IntSet | UnionSet, params: Sequence[str] | None = None) -> str:
    parts = list(s) if isinstance(s, UnionSet) else [s]
    if params is None:
        params = sorted({p for x in parts for p in x.params})
    pieces = [p for x in parts for p in set_pieces(x)]
    return f"{_header(params)}{{ {'; '.join(pieces)} }}" if pieces else f"{_header(params)}{{ }}"


def format_rel(r: IntRel | UnionRel, params: Sequence[str] | None = None) -> str:
    parts = list(r) if isinstance(r, UnionRel) else [r]
    if params is None:
        params = sorted({p for x in parts for p in x.params})
    pieces = [p for x in parts for p in rel_pieces(x)]
    return f"{_header(params)}{{ {'; '.join(pieces)} }}" if pieces else f"{_header(params)}{{ }}"


# -- parsing ---------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<int>\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*'*)|(?P<op>->|<=|>=|==|!=|[-+*\[\]{}(),;:<>=]))"
)
KEYWORDS = {"and", "or", "exists", "true", "false"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            bad = n - len(rest)
            raise NotationError(f"unexpected character {rest[0]!r}", bad, text)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("eof", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, params: Iterable[str] = ()):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.params = set(params)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str):
        raise NotationError(msg, self.tok.pos, self.text)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind != "int":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")

    def ident(self) -> str:
        t = self.tok
        if t.kind != "id" or t.text in KEYWORDS:
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.i += 1
        return t.text

    # expressions
    def expr(self, scope: set[str]) -> AffineExpr:
        sign = 1
        if self.accept("-"):
            sign = -1
        else:
            self.accept("+")
        e = self.term(scope) * sign
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            t = self.term(scope)
            e = e + t if op == "+" else e - t
        return e

    def term(self, scope: set[str]) -> AffineExpr:
        e = self.factor(scope)
        while True:
            if self.accept("*"):
                rhs = self.factor(scope)
            elif self.tok.kind in ("id", "int") and self.toks[self.i - 1].kind == "int" and \
                    self.tok.text not in KEYWORDS and self.tok.pos == self.toks[self.i - 1].pos + len(self.toks[self.i - 1].text):
                rhs = self.factor(scope)  # juxtaposition: 4it
            else:
                return e
            try:
                e = e * rhs
            except ValueError:
                self.error("non-affine product")

    def factor(self, scope: set[str]) -> AffineExpr:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return AffineExpr.const(int(t.text))
        if self.accept("("):
            e = self.expr(scope)
            self.expect(")")
            return e
        if self.accept("-"):
            return -self.factor(scope)
        name = self.ident()
        if name not in scope:
            self.i -= 1
            self.error(f"unknown name {name!r}")
        return AffineExpr.var(name)

    # formulas -> DNF (list of Conjunct)
    def formula(self, scope: set[str]) -> list[Conjunct]:
        out = self.conj(scope)
        while self.accept("or"):
            out = out + self.conj(scope)
        return out

    def conj(self, scope: set[str]) -> list[Conjunct]:
        out = self.atom(scope)
        while self.accept("and"):
            rhs = self.atom(scope)
            out = [Conjunct(a.constraints + b.constraints, a.exists + b.exists) for a in out for b in rhs]
        return out

    def atom(self, scope: set[str]) -> list[Conjunct]:
        if self.accept("true"):
            return [Conjunct()]
        if self.accept("false"):
            return []
        if self.accept("exists"):
            self.expect("(")
            names = [self.ident()]
            while self.accept(","):
                names.append(self.ident())
            self.expect(":")
            clash = [n for n in names if n in scope]
            if clash:
                self.error(f"existential {clash[0]!r} shadows a visible name")
            inner = self.formula(scope | set(names))
            self.expect(")")
            return [Conjunct(c.constraints, c.exists + tuple(names)) for c in inner]
        if self.tok.text == "(":
            # parenthesized formula or parenthesized expression starting a comparison
            save = self.i
            self.i += 1
            try:
                f = self.formula(scope)
                self.expect(")")
                if self.tok.text not in ("<", "<=", ">", ">=", "=", "==", "+", "-", "*"):
                    return f
            except NotationError:
                pass
            self.i = save
        return [Conjunct(self.chain(scope))]

    def chain(self, scope: set[str]) -> list[Constraint]:
        lhs = self.expr(scope)
        out = []
        ops = {"<": lt, "<=": le, ">": gt, ">=": ge, "=": eq, "==": eq}
        if self.tok.text not in ops:
            self.error(f"expected comparison, found {self.tok.text or 'end of input'!r}")
        while self.tok.text in ops:
            op = ops[self.tok.text]
            self.i += 1
            rhs = self.expr(scope)
            out.append(op(lhs, rhs))
            lhs = rhs
        return out

    # tuples and pieces
    def tuple_(self) -> tuple[str, list[_Tok | AffineExpr]]:
        space = ""
        if self.tok.kind == "id" and self.tok.text not in KEYWORDS:
            space = self.ident()
        self.expect("[")
        elems: list = []
        if not self.accept("]"):
            elems.append(self._elem())
            while self.accept(","):
                elems.append(self._elem())
            self.expect("]")
        return space, elems

    def _elem(self):
        start = self.i
        depth = 0
        while True:
            t = self.tok
            if t.kind == "eof":
                self.error("unterminated tuple")
            if t.text in ("(", "["):
                depth += 1
            elif t.text in (")", "]"):
                if depth == 0:
                    break
                depth -= 1
            elif t.text == "," and depth == 0:
                break
            self.i += 1
        return (start, self.i)

    def _resolve(self, elems, taken: set[str], base: str, scope: set[str]):
        """Turn raw tuple elements into dim names plus defining equalities."""
        dims, cons = [], []
        end_i = self.i
        for start, stop in elems:
            toks = self.toks[start:stop]
            if len(toks) == 1 and toks[0].kind == "id" and toks[0].text not in scope | taken:
                dims.append(toks[0].text)
                taken.add(toks[0].text)
                scope.add(toks[0].text)
                continue
            dims.append(None)
        for idx, (start, stop) in enumerate(elems):
            if dims[idx] is not None:
                continue
            self.i = start
            e = self.expr(scope)
            if self.i != stop:
                self.error("malformed tuple element")
            name = fresh_names(1, taken | scope, base)[0]
            taken.add(name)
            dims[idx] = name
            cons.append(eq(AffineExpr.var(name), e))
        self.i = end_i
        return dims, cons

    def piece(self):
        in_space, in_elems = self.tuple_()
        out = None
        if self.accept("->"):
            out = self.tuple_()
        taken: set[str] = set()
        scope = set(self.params)
        in_dims, in_cons = self._resolve(in_elems, taken, "i", scope)
        out_dims, out_cons = [], []
        if out is not None:
            out_dims, out_cons = self._resolve(out[1], taken, "o", scope)
        body = [Conjunct()]
        if self.accept(":"):
            body = self.formula(scope)
        extra = in_cons + out_cons
        disj = [Conjunct(tuple(extra) + c.constraints, c.exists) for c in body]
        return in_space, in_dims, out, out_dims, disj

    def top(self):
        params = []
        if self.tok.text == "[":
            save = self.i
            self.i += 1
            names = []
            if not self.accept("]"):
                names.append(self.ident())
                while self.accept(","):
                    names.append(self.ident())
                self.expect("]")
            if self.accept("->"):
                params = names
            else:
                self.i = save
        self.params |= set(params)
        self.expect("{")
        pieces = []
        if not self.accept("}"):
            pieces.append(self.piece())
            while self.accept(";"):
                if self.tok.text == "}":
                    break
                pieces.append(self.piece())
            self.expect("}")
        return params, pieces


def parse_set(text: str, params: Iterable[str] = ()) -> IntSet | UnionSet:
    """Parse set notation; one space gives an IntSet, several a UnionSet."""
    p = _Parser(text, params)
    declared, pieces = p.top()
    if p.tok.kind != "eof":
        p.error("trailing input")
    sets = []
    for in_space, dims, out, _, disj in pieces:
        if out is not None:
            raise NotationError("expected a set, found a relation piece")
        sets.append(IntSet(in_space, dims, disj, p.params))
    if not sets:
        return UnionSet()
    u = UnionSet(sets)
    return next(iter(u)) if len(u) == 1 else u


def parse_rel(text: str, params: Iterable[str] = ()) -> IntRel | UnionRel:
    p = _Parser(text, params)
    declared, pieces = p.top()
    if p.tok.kind != "eof":
        p.error("trailing input")
    rels = []
    for in_space, in_dims, out, out_dims, disj in pieces:
        if out is None:
            raise NotationError("expected a relation, found a set piece")
        rels.append(IntRel(in_space, in_dims, out[0], out_dims, disj, p.params))
    if not rels:
        return UnionRel()
    u = UnionRel(rels)
    return next(iter(u)) if len(u) == 1 else u


def parse_formula(text: str, scope: Iterable[str]) -> list[Conjunct]:
    """Parse a constraint formula (``and``/``or``/``exists``) into DNF."""
    p = _Parser(text)
    out = p.formula(set(scope))
    if p.tok.kind != "eof":
        p.error("trailing input")
    return out


def parse_expr(text: str, scope: Iterable[str]) -> AffineExpr:
    p = _Parser(text)
    e = p.expr(set(scope))
    if p.tok.kind != "eof":
        p.error("trailing input")
    return e


def parse_expr_list(text: str, scope: Iterable[str]) -> list[AffineExpr]:
    """``[e1, e2, ...]`` or ``e1, e2``."""
    p = _Parser(text)
    scope = set(scope)
    bracket = p.accept("[")
    out = []
    if not (bracket and p.tok.text == "]"):
        out.append(p.expr(scope))
        while p.accept(","):
            out.append(p.expr(scope))
    if bracket:
        p.expect("]")
    if p.tok.kind != "eof":
        p.error("trailing input")
    return out
