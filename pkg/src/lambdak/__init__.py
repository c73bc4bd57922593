"""A row-polymorphic effect calculus: types, inference, checking, evaluation."""
from .checker import CheckError, Derivation, check, checks
from .evaluator import (
    AnswerKind, FaultKind, Finished, FaultyOutcome, FuelExhausted, StuckOutcome,
    evaluate, step, trace,
)
from .infer import EMPTY_ENV, Env, ErrorKind, InferError, close_type, infer, infer_program, open_type
from .surface import ParseError, parse_effect, parse_expr, parse_type, print_effect, print_expr, print_type
from .types import Scheme, Session, Subst
from .unify import Reason, UnifyFailure, unify

__all__ = [
    "AnswerKind", "CheckError", "Derivation", "EMPTY_ENV", "Env", "ErrorKind", "FaultKind",
    "Finished", "FaultyOutcome", "FuelExhausted", "InferError", "ParseError", "Reason",
    "Scheme", "Session", "StuckOutcome", "Subst", "UnifyFailure", "check", "checks",
    "close_type", "evaluate", "infer", "infer_program", "open_type", "parse_effect",
    "parse_expr", "parse_type", "print_effect", "print_expr", "print_type", "step",
    "trace", "unify",
]
