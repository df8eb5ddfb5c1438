"""Reduced SSA kernel IR: parsing, analysis and model extraction."""

from .cfg import IrreducibleCfg, dominators, natural_loops, reachable, reverse_postorder
from .extract import Section, UnsupportedConstruct, extract_model, grid_config, sections
from .ir import (
    ArrayDecl,
    BasicBlock,
    Function,
    Instruction,
    IrError,
    IrSyntaxError,
    Param,
    Ref,
    SsaViolation,
    UnknownOpcode,
    parse,
)
from .loops import Induction, LoopExit, LoopInfo, MultipleInductions, NonAffineBound, find_loops
from .propagate import (
    Affine,
    GridBindings,
    Opaque,
    PropagatedExpr,
    UnsupportedIdPattern,
    find_grid_iterators,
    propagate,
)


def load_function(path: str) -> Function:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


__all__ = [name for name in dir() if not name.startswith("_")]
