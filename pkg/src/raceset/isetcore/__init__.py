"""Parameterized integer sets and relations."""

from .affine import (
    PROVEN_INFEASIBLE,
    AffineExpr,
    Constraint,
    Kind,
    ProvenInfeasible,
    eq,
    gcd_normalize,
    ge,
    gt,
    le,
    lt,
)
from .sets import (
    DEFAULT_PARAM_SAMPLES,
    MAX_DISJUNCTS,
    ArityMismatch,
    Conjunct,
    DisjunctLimitExceeded,
    EmptinessVerdict,
    InexactOperation,
    IntRel,
    IntSet,
    SpaceMismatch,
    UnionRel,
    UnionSet,
    Verdict,
    WitnessPoint,
    apply_range,
    compose,
    equal_on_box,
    intersect,
    inverse,
    is_empty,
    lex_disjuncts,
    lex_lt,
    project_out,
    subtract,
    union,
)

__all__ = [name for name in dir() if not name.startswith("_")]
