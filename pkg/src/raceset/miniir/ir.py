"""Reduced SSA kernel IR: data types, parser and well-formedness checks.

Grammar (line oriented; ``;`` starts a comment)::

    kernel @name(%p: i32, %A: global f32[%M, %N] range(0, %K) nondecreasing, ...)
      shared %sm: [8 x i32], ...
      launch grid(2) block(4, 2)
    {
    label:
      %r = add %a, 4
      %r = icmp slt %a, %b
      %r = load %A[%i, %j]
      store %v, %A[%i]
      %p = getelem %A, %i          ; pointer, usable as load %p / store %v, %p
      %r = phi [%a, pred1], [%b, pred2]
      %r = call tid.x
      barrier | barrier.block | barrier.warp<W>
      br label | br %c, then, else
      ret
    }

``range(lo, hi)`` states that loaded values lie in ``[lo, hi)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator

from ..isetcore import AffineExpr

ARITH = {"add", "sub", "mul", "shl", "and", "or", "xor", "fadd", "fsub", "fmul", "fdiv"}
PREDICATES = {"eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge"}
INTRINSICS = {
    f"{k}.{a}" for k in ("tid", "bid", "blockdim", "griddim") for a in "xyz"
}
TERMINATORS = {"br", "cond_br", "ret", "indirectbr"}
SCALAR_TYPES = {"i1", "i8", "i16", "i32", "i64", "f16", "f32", "f64"}


class IrError(ValueError):
    pass


class IrSyntaxError(IrError):
    def __init__(self, msg: str, line: int, col: int, expected: str = ""):
        self.line, self.col, self.expected = line, col, expected
        tail = f" (expected {expected})" if expected else ""
        super().__init__(f"line {line}, column {col}: {msg}{tail}")


class SsaViolation(IrError):
    pass


class UnknownOpcode(IrError):
    def __init__(self, opcode: str, line: int):
        self.opcode, self.line = opcode, line
        super().__init__(f"line {line}: unknown opcode {opcode!r}")


@dataclass(frozen=True)
class Ref:
    """Reference to an SSA value, kernel parameter or array (``%name``)."""

    name: str

    def __str__(self):
        return f"%{self.name}"


Operand = "Ref | int | float"


@dataclass
class Instruction:
    opcode: str
    result: str | None = None
    operands: list = field(default_factory=list)
    type: str = ""
    pred: str = ""  # icmp predicate
    array: str | None = None  # load/store/getelem/atomic target array
    index: list = field(default_factory=list)  # index operands for memory ops
    pointer: str | None = None  # SSA pointer for load/store through getelem
    targets: list[str] = field(default_factory=list)  # branch targets
    incoming: list[tuple] = field(default_factory=list)  # phi: (value, label)
    intrinsic: str = ""
    scope: str = ""  # barrier scope: "block" or "warp<W>"
    decl: "ArrayDecl | None" = None  # alloca_shared
    line: int = 0

    def uses(self) -> Iterator[str]:
        for op in self.operands:
            if isinstance(op, Ref):
                yield op.name
        for op in self.index:
            if isinstance(op, Ref):
                yield op.name
        if self.pointer:
            yield self.pointer
        for v, _ in self.incoming:
            if isinstance(v, Ref):
                yield v.name

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    def is_memory(self) -> bool:
        return self.opcode in ("load", "store") or self.opcode.startswith("atomic.")


@dataclass
class BasicBlock:
    label: str
    instrs: list[Instruction] = field(default_factory=list)
    line: int = 0

    @property
    def terminator(self) -> Instruction:
        return self.instrs[-1]

    @property
    def successors(self) -> list[str]:
        t = self.instrs[-1] if self.instrs else None
        return list(t.targets) if t else []


@dataclass
class ArrayDecl:
    name: str
    space: str  # "global" | "shared"
    elem: str
    extents: list[AffineExpr]
    value_range: tuple[AffineExpr, AffineExpr] | None = None
    nondecreasing: bool = False


@dataclass
class Param:
    name: str
    type: str
    array: ArrayDecl | None = None


@dataclass
class Function:
    name: str
    params: list[Param] = field(default_factory=list)
    shared: list[ArrayDecl] = field(default_factory=list)
    blocks: list[BasicBlock] = field(default_factory=list)
    grid: tuple[int, int, int] | None = None
    block: tuple[int, int, int] | None = None

    @property
    def entry(self) -> BasicBlock:
        return self.blocks[0]

    def block_map(self) -> dict[str, BasicBlock]:
        return {b.label: b for b in self.blocks}

    @property
    def scalar_params(self) -> list[str]:
        return [p.name for p in self.params if p.array is None]

    @property
    def arrays(self) -> dict[str, ArrayDecl]:
        out = {p.name: p.array for p in self.params if p.array is not None}
        for s in self.shared:
            out[s.name] = s
        for b in self.blocks:
            for ins in b.instrs:
                if ins.opcode == "alloca_shared":
                    out[ins.result] = ins.decl
        return out

    def instructions(self) -> Iterator[tuple[BasicBlock, int, Instruction]]:
        for b in self.blocks:
            for i, ins in enumerate(b.instrs):
                yield b, i, ins

    def definitions(self) -> dict[str, tuple[BasicBlock, int, Instruction]]:
        out = {}
        for b, i, ins in self.instructions():
            if ins.result:
                out[ins.result] = (b, i, ins)
        return out

    def predecessors(self) -> dict[str, list[str]]:
        preds: dict[str, list[str]] = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for s in b.successors:
                preds[s].append(b.label)
        return preds

    def with_launch(self, grid=None, block=None) -> "Function":
        from dataclasses import replace
        return replace(self, grid=_pad3(grid) if grid else self.grid, block=_pad3(block) if block else self.block)


def _pad3(v) -> tuple[int, int, int]:
    v = tuple(int(x) for x in v)
    if not 1 <= len(v) <= 3 or any(x < 1 for x in v):
        raise IrError(f"launch extents must be 1-3 positive integers, got {v}")
    return v + (1,) * (3 - len(v))


# -- tokenizer -------------------------------------------------------------------

_TOK = re.compile(
    r"\s*(?:(?P<float>\d+\.\d*(?:[eE][-+]?\d+)?)|(?P<int>\d+)|(?P<ref>%[A-Za-z_][\w.]*)"
    r"|(?P<glob>@[A-Za-z_][\w.]*)|(?P<id>[A-Za-z_][\w.]*)|(?P<op>[\[\](){},:=+\-*<>]))"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str, line_offset: int = 0) -> list[_Tok]:
    out = []
    for ln, raw in enumerate(text.split("\n"), 1 + line_offset):
        line = raw.split(";", 1)[0]
        pos = 0
        while pos < len(line):
            if line[pos:].strip() == "":
                break
            m = _TOK.match(line, pos)
            if not m:
                col = len(line) - len(line[pos:].lstrip()) + 1
                raise IrSyntaxError(f"unexpected character {line[col - 1]!r}", ln, col)
            kind = m.lastgroup
            out.append(_Tok(kind, m.group(kind), ln, m.start(kind) + 1))
            pos = m.end()
        out.append(_Tok("nl", "\n", ln, len(line) + 1))
    out.append(_Tok("eof", "", out[-1].line if out else 1, 1))
    return out


class _P:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    @property
    def t(self) -> _Tok:
        return self.toks[self.i]

    def err(self, msg: str, expected: str = ""):
        raise IrSyntaxError(msg, self.t.line, self.t.col, expected)

    def skip_nl(self):
        while self.t.kind == "nl":
            self.i += 1

    def accept(self, text: str) -> bool:
        if self.t.text == text and self.t.kind in ("op", "id"):
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            self.err(f"found {self.t.text or 'end of input'!r}", repr(text))

    def take(self, kind: str, what: str) -> _Tok:
        if self.t.kind != kind:
            self.err(f"found {self.t.text.strip() or 'end of line'!r}", what)
        tok = self.t
        self.i += 1
        return tok

    # affine extents over %params
    def affine(self, scalars: set[str]) -> AffineExpr:
        e = self._aterm(scalars)
        while self.t.text in ("+", "-") and self.t.kind == "op":
            op = self.t.text
            self.i += 1
            rhs = self._aterm(scalars)
            e = e + rhs if op == "+" else e - rhs
        return e

    def _aterm(self, scalars: set[str]) -> AffineExpr:
        e = self._afactor(scalars)
        while self.accept("*"):
            rhs = self._afactor(scalars)
            try:
                e = e * rhs
            except ValueError:
                self.err("non-affine extent")
        return e

    def _afactor(self, scalars: set[str]) -> AffineExpr:
        if self.t.kind == "int":
            v = int(self.t.text)
            self.i += 1
            return AffineExpr.const(v)
        if self.accept("("):
            e = self.affine(scalars)
            self.expect(")")
            return e
        if self.t.kind == "ref":
            name = self.t.text[1:]
            if name not in scalars:
                self.err(f"unknown scalar parameter %{name}")
            self.i += 1
            return AffineExpr.var(name)
        self.err(f"found {self.t.text!r}", "integer or scalar parameter")

    def operand(self):
        if self.t.text == "-" and self.toks[self.i + 1].kind in ("int", "float"):
            self.i += 1
            v = self.operand()
            return -v
        t = self.t
        if t.kind == "ref":
            self.i += 1
            return Ref(t.text[1:])
        if t.kind == "int":
            self.i += 1
            return int(t.text)
        if t.kind == "float":
            self.i += 1
            return float(t.text)
        if t.kind == "id" and t.text in ("true", "false"):
            self.i += 1
            return 1 if t.text == "true" else 0
        self.err(f"found {t.text.strip() or 'end of line'!r}", "operand")

    def end_line(self):
        if self.t.kind not in ("nl", "eof"):
            self.err(f"unexpected {self.t.text!r}", "end of line")
        self.skip_nl()


def _elem_type(p: _P) -> str:
    tok = p.take("id", "element type")
    if tok.text not in SCALAR_TYPES:
        raise IrSyntaxError(f"unknown type {tok.text!r}", tok.line, tok.col, "scalar type")
    return tok.text


def _shared_type(p: _P, name: str) -> ArrayDecl:
    """``[8 x i32]`` or ``[2 x [4 x f32]]``."""
    extents = []
    depth = 0
    while p.accept("["):
        depth += 1
        n = p.take("int", "extent")
        extents.append(AffineExpr.const(int(n.text)))
        if not (p.t.kind == "id" and p.t.text == "x"):
            p.err(f"found {p.t.text!r}", "'x'")
        p.i += 1
        if p.t.text != "[":
            break
    elem = _elem_type(p)
    for _ in range(depth):
        p.expect("]")
    return ArrayDecl(name, "shared", elem, extents)


def _param(p: _P, scalars: set[str]) -> Param:
    name = p.take("ref", "parameter name").text[1:]
    p.expect(":")
    if p.t.kind == "id" and p.t.text == "global":
        p.i += 1
        elem = _elem_type(p)
        p.expect("[")
        exts = [p.affine(scalars)]
        while p.accept(","):
            exts.append(p.affine(scalars))
        p.expect("]")
        decl = ArrayDecl(name, "global", elem, exts)
        while p.t.kind == "id" and p.t.text in ("range", "nondecreasing"):
            if p.accept("nondecreasing"):
                decl.nondecreasing = True
            else:
                p.i += 1
                p.expect("(")
                lo = p.affine(scalars)
                p.expect(",")
                hi = p.affine(scalars)
                p.expect(")")
                decl.value_range = (lo, hi)
        return Param(name, elem, decl)
    return Param(name, _elem_type(p))


def _scalar_names(toks: list[_Tok]) -> set[str]:
    """Pre-scan the header so extents may mention later scalar parameters."""
    names = set()
    for a, b, c in zip(toks, toks[1:], toks[2:]):
        if a.kind == "ref" and b.text == ":" and c.kind == "id" and c.text in SCALAR_TYPES:
            names.add(a.text[1:])
    return names


def _memref(p: _P, ins: Instruction):
    """``%A[i, j]`` or a getelem pointer ``%p``."""
    name = p.take("ref", "array or pointer").text[1:]
    if p.accept("["):
        ins.array = name
        ins.index = [p.operand()]
        while p.accept(","):
            ins.index.append(p.operand())
        p.expect("]")
    else:
        ins.pointer = name


def _instruction(p: _P) -> Instruction:
    line = p.t.line
    result = None
    if p.t.kind == "ref" and p.toks[p.i + 1].text == "=":
        result = p.t.text[1:]
        p.i += 2
    op_tok = p.take("id", "opcode")
    op = op_tok.text
    ins = Instruction(op, result, line=line)
    if op in ARITH:
        ins.operands = [p.operand()]
        p.expect(",")
        ins.operands.append(p.operand())
    elif op == "icmp":
        pred = p.take("id", "comparison predicate").text
        if pred not in PREDICATES:
            raise IrSyntaxError(f"unknown predicate {pred!r}", line, op_tok.col)
        ins.pred = pred
        ins.operands = [p.operand()]
        p.expect(",")
        ins.operands.append(p.operand())
    elif op == "select":
        ins.operands = [p.operand()]
        for _ in range(2):
            p.expect(",")
            ins.operands.append(p.operand())
    elif op == "load":
        _memref(p, ins)
    elif op == "store":
        ins.operands = [p.operand()]
        p.expect(",")
        _memref(p, ins)
    elif op.startswith("atomic."):
        _memref(p, ins)
        p.expect(",")
        ins.operands = [p.operand()]
    elif op == "getelem":
        ins.array = p.take("ref", "array").text[1:]
        while p.accept(","):
            ins.index.append(p.operand())
    elif op == "phi":
        while True:
            p.expect("[")
            v = p.operand()
            p.expect(",")
            lab = p.take("id", "block label").text
            p.expect("]")
            ins.incoming.append((v, lab))
            if not p.accept(","):
                break
    elif op == "call":
        if p.t.kind == "glob":
            ins.intrinsic = p.t.text
            p.i += 1
            # user function call: swallow argument list
            if p.accept("("):
                depth = 1
                while depth and p.t.kind != "eof":
                    if p.t.text == "(":
                        depth += 1
                    elif p.t.text == ")":
                        depth -= 1
                    p.i += 1
        else:
            name = p.take("id", "intrinsic").text
            if name not in INTRINSICS:
                raise IrSyntaxError(f"unknown intrinsic {name!r}", line, op_tok.col, "tid.x, bid.x, ...")
            ins.intrinsic = name
    elif op == "barrier" or op.startswith("barrier."):
        scope = op.split(".", 1)[1] if "." in op else "block"
        if scope != "block" and not re.fullmatch(r"warp\d+", scope):
            raise IrSyntaxError(f"unknown barrier scope {scope!r}", line, op_tok.col, "block or warp<W>")
        ins.opcode, ins.scope = "barrier", scope
    elif op == "br":
        first = p.t
        if first.kind == "ref":
            ins.opcode = "cond_br"
            ins.operands = [p.operand()]
            p.expect(",")
            ins.targets = [p.take("id", "block label").text]
            p.expect(",")
            ins.targets.append(p.take("id", "block label").text)
        else:
            ins.targets = [p.take("id", "block label").text]
    elif op == "indirectbr":
        ins.operands = [p.operand()]
    elif op == "ret":
        pass
    elif op == "alloca_shared":
        ins.decl = _shared_type(p, result or "")
    else:
        raise UnknownOpcode(op, line)
    p.end_line()
    return ins


def parse(text: str) -> "Function":
    """Parse and verify a mini-IR kernel."""
    toks = _tokenize(text)
    p = _P(toks)
    p.skip_nl()
    p.expect("kernel")
    name = p.take("glob", "@kernel-name").text[1:]
    scalars = _scalar_names(toks)
    p.expect("(")
    p.skip_nl()
    params = []
    if not p.accept(")"):
        params.append(_param(p, scalars))
        p.skip_nl()
        while p.accept(","):
            p.skip_nl()
            params.append(_param(p, scalars))
            p.skip_nl()
        p.expect(")")
    p.skip_nl()
    shared = []
    grid = block = None
    while p.t.kind == "id" and p.t.text in ("shared", "launch"):
        if p.accept("shared"):
            while True:
                p.skip_nl()
                sname = p.take("ref", "shared array name").text[1:]
                p.expect(":")
                shared.append(_shared_type(p, sname))
                if not p.accept(","):
                    break
        else:
            p.i += 1
            for key in ("grid", "block"):
                p.expect(key)
                p.expect("(")
                vals = [int(p.take("int", "extent").text)]
                while p.accept(","):
                    vals.append(int(p.take("int", "extent").text))
                p.expect(")")
                if key == "grid":
                    grid = _pad3(vals)
                else:
                    block = _pad3(vals)
        p.skip_nl()
    p.expect("{")
    p.skip_nl()
    blocks: list[BasicBlock] = []
    cur: BasicBlock | None = None
    while not (p.t.kind == "op" and p.t.text == "}"):
        if p.t.kind == "eof":
            p.err("unterminated kernel body", "'}'")
        if p.t.kind == "id" and p.toks[p.i + 1].text == ":" and p.toks[p.i + 2].kind in ("nl", "eof"):
            cur = BasicBlock(p.t.text, line=p.t.line)
            blocks.append(cur)
            p.i += 2
            p.skip_nl()
            continue
        if cur is None:
            cur = BasicBlock("entry", line=p.t.line)
            blocks.append(cur)
        cur.instrs.append(_instruction(p))
    p.i += 1
    p.skip_nl()
    if p.t.kind != "eof":
        p.err(f"unexpected {p.t.text!r} after kernel body", "end of input")
    if not blocks:
        blocks = [BasicBlock("entry", [Instruction("ret")])]
    f = Function(name, params, shared, blocks, grid, block)
    verify(f)
    return f


# -- verification -------------------------------------------------------------------


def verify(f: Function) -> None:
    labels = [b.label for b in f.blocks]
    if len(set(labels)) != len(labels):
        raise SsaViolation("duplicate block labels")
    known = set(labels)
    for b in f.blocks:
        if not b.instrs or not b.instrs[-1].is_terminator:
            raise SsaViolation(f"block {b.label} does not end with a terminator")
        for ins in b.instrs[:-1]:
            if ins.is_terminator:
                raise SsaViolation(f"line {ins.line}: terminator in the middle of block {b.label}")
        for t in b.successors:
            if t not in known:
                raise SsaViolation(f"block {b.label} branches to unknown label {t}")
        for ins in b.instrs:
            if ins.opcode == "phi":
                for _, lab in ins.incoming:
                    if lab not in known:
                        raise SsaViolation(f"line {ins.line}: phi names unknown block {lab}")
    globals_ = {p.name for p in f.params} | {s.name for s in f.shared}
    defs: dict[str, tuple[str, int]] = {}
    for b in f.blocks:
        for i, ins in enumerate(b.instrs):
            if ins.result:
                if ins.result in defs or ins.result in globals_:
                    raise SsaViolation(f"line {ins.line}: %{ins.result} defined more than once")
                defs[ins.result] = (b.label, i)
    arrays = set(f.arrays)
    from .cfg import dominators, reachable
    reach = reachable(f)
    dom = dominators(f)
    preds = f.predecessors()
    for b in f.blocks:
        if b.label not in reach:
            continue
        for i, ins in enumerate(b.instrs):
            if ins.array is not None and ins.array not in arrays:
                raise SsaViolation(f"line {ins.line}: %{ins.array} is not a declared array")
            if ins.opcode == "phi":
                if i and b.instrs[i - 1].opcode != "phi":
                    raise SsaViolation(f"line {ins.line}: phi after a non-phi instruction")
                labs = sorted(lab for _, lab in ins.incoming)
                want = sorted(x for x in preds[b.label] if x in reach)
                if sorted(set(labs)) != sorted(set(want)):
                    raise SsaViolation(f"line {ins.line}: phi incoming blocks {labs} do not match predecessors {want}")
                for v, lab in ins.incoming:
                    if isinstance(v, Ref):
                        _check_use(v.name, lab, None, defs, globals_, dom, ins.line)
                continue
            for u in ins.uses():
                _check_use(u, b.label, i, defs, globals_, dom, ins.line)


def _check_use(name, block, index, defs, globals_, dom, line):
    if name in globals_:
        return
    if name not in defs:
        raise SsaViolation(f"line {line}: use of undefined value %{name}")
    db, di = defs[name]
    if db == block:
        if index is not None and di >= index:
            raise SsaViolation(f"line {line}: %{name} used before its definition")
        return
    if db not in dom.get(block, ()):
        raise SsaViolation(f"line {line}: definition of %{name} does not dominate its use")
