"""Command-line interface: ``lambdak {infer,eval,check,suite}``.

Exit codes
    0  success (a value, a derivation, a clean suite)
    1  suite found counterexamples
    2  type error
    3  parse error
    4  evaluation finished with an uncaught exception
    5  evaluation went wrong (faulty or stuck; needs ``--unsafe``)
    6  evaluation ran out of fuel
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import syntax as S
from .checker import CheckError, check
from .evaluator import AnswerKind, Finished, FaultyOutcome, FuelExhausted, iterate
from .infer import EMPTY_ENV, InferError, close_type, infer_program
from .surface import Namer, ParseError, parse_effect, parse_expr, parse_type, print_effect, print_expr, print_type
from .testkit import FEATURES, GenConfig, run_metatheory_suite
from .types import Scheme, Session

OK, COUNTEREXAMPLE, TYPE_ERROR, PARSE_ERROR, EXCEPTION, FAULTY, OUT_OF_FUEL = 0, 1, 2, 3, 4, 5, 6


class _Output:
    """Collects the JSON document or writes text as it goes."""

    def __init__(self, as_json: bool):
        self.as_json = as_json
        self.doc = {"scheme": None, "effect": None, "diagnostics": []}

    def line(self, text: str) -> None:
        if not self.as_json:
            print(text)

    def error(self, kind: str, message: str, span=None) -> None:
        diag = {"kind": kind, "message": message}
        if span is not None:
            diag["line"], diag["column"] = span.line, span.column
        self.doc["diagnostics"].append(diag)
        if not self.as_json:
            where = f"{span}: " if span is not None else ""
            print(f"{where}{kind}: {message}", file=sys.stderr)

    def finish(self, code: int) -> int:
        if self.as_json:
            print(json.dumps(self.doc, indent=2))
        return code


def _source(args) -> str:
    if args.expr is not None:
        return args.expr
    return Path(args.file).read_text(encoding="utf-8")


def _parse_message(exc: ParseError) -> str:
    if exc.expected:
        return f"{exc.message} (expected {', '.join(sorted(exc.expected))})"
    return exc.message


def _parse(args, out: _Output):
    try:
        return parse_expr(_source(args), debug=args.debug_syntax)
    except ParseError as exc:
        out.error("parse-error", _parse_message(exc), exc.span)
        return None


def _typing(e, out: _Output, closed: bool, report: bool = True):
    try:
        typing = infer_program(e)
    except InferError as exc:
        if report:
            out.error(exc.kind.value, exc.message, exc.span)
        return None
    namer = Namer()
    scheme = close_type(typing.scheme) if closed else typing.scheme
    out.doc["scheme"] = print_type(scheme, namer)
    out.doc["effect"] = print_effect(typing.effect, namer)
    return typing


# ---------------------------------------------------------------- commands

def cmd_infer(args) -> int:
    out = _Output(args.json)
    e = _parse(args, out)
    if e is None:
        return out.finish(PARSE_ERROR)
    if _typing(e, out, args.closed) is None:
        return out.finish(TYPE_ERROR)
    out.line(out.doc["scheme"])
    out.line(f"effect: {out.doc['effect']}")
    return out.finish(OK)


def cmd_eval(args) -> int:
    out = _Output(args.json)
    e = _parse(args, out)
    if e is None:
        return out.finish(PARSE_ERROR)
    if args.unsafe:
        # Still report the type if there is one, but never refuse.
        _typing(e, out, False, report=args.json)
    elif _typing(e, out, False) is None:
        return out.finish(TYPE_ERROR)

    steps = []

    def on_step(n, rule, term):
        if args.json:
            steps.append({"step": n, "rule": rule, "term": print_expr(term)})
        else:
            print(f"step {n}: ({rule}) {print_expr(term)}")

    result = iterate(S.desugar(e), args.fuel, on_step if args.trace else None)
    out.doc["steps"] = result.steps
    if args.trace:
        out.doc["trace"] = steps
    if isinstance(result, Finished):
        out.doc["answer"] = print_expr(result.answer)
        out.doc["outcome"] = result.kind.value
        code = OK if result.kind in (AnswerKind.VALUE, AnswerKind.HEAP_VALUE) else EXCEPTION
        out.line(out.doc["answer"])
        out.line(f"-- {result.kind.value} after {result.steps} steps")
        return out.finish(code)
    if isinstance(result, FuelExhausted):
        out.doc["answer"] = None
        out.doc["outcome"] = "FuelExhausted"
        out.line(print_expr(result.last))
        out.line(f"-- FuelExhausted after {result.steps} steps")
        return out.finish(OUT_OF_FUEL)
    out.doc["answer"] = None
    if isinstance(result, FaultyOutcome):
        out.doc["outcome"] = "Faulty"
        out.doc["fault"] = result.reason.value
        out.line(f"faulty {result.reason.value}: {print_expr(result.at)}")
        out.line(f"-- Faulty after {result.steps} steps")
    else:
        out.doc["outcome"] = "Stuck"
        out.line(f"stuck: {print_expr(result.at)}")
        out.line(f"-- Stuck after {result.steps} steps")
    return out.finish(FAULTY)


def _render(d, namer: Namer, depth: int = 0) -> list[str]:
    head = f"{'  ' * depth}({d.rule}) {print_expr(d.expr)} : {print_type(d.type, namer)} | {print_effect(d.effect, namer)}"
    return [head] + [line for p in d.premises for line in _render(p, namer, depth + 1)]


def cmd_check(args) -> int:
    out = _Output(args.json)
    e = _parse(args, out)
    if e is None:
        return out.finish(PARSE_ERROR)
    session = Session()
    try:
        if args.type is None or args.effect is None:
            typing = infer_program(e, session)
        t = typing.type if args.type is None else parse_type(args.type, session)
        eff = typing.effect if args.effect is None else parse_effect(args.effect, session)
    except ParseError as exc:
        out.error("parse-error", _parse_message(exc), exc.span)
        return out.finish(PARSE_ERROR)
    except InferError as exc:
        out.error(exc.kind.value, exc.message, exc.span)
        return out.finish(TYPE_ERROR)
    if isinstance(t, Scheme):
        t = t.body
    namer = Namer()
    out.doc["scheme"] = print_type(t, namer)
    out.doc["effect"] = print_effect(eff, namer)
    try:
        d = check(EMPTY_ENV, e, t, eff, session)
    except CheckError as exc:
        out.error("check-failure", str(exc))
        return out.finish(TYPE_ERROR)
    out.doc["rules"] = d.size()
    out.line(f"ok: {out.doc['scheme']} | {out.doc['effect']} ({d.size()} rule applications)")
    if args.derivation:
        for line in _render(d, namer):
            out.line(line)
    return out.finish(OK)


def _allow(text: str) -> frozenset:
    if text.strip().lower() in ("", "none"):
        return frozenset()
    parts = frozenset(p.strip() for p in text.split(",") if p.strip())
    unknown = parts - FEATURES
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown effects {', '.join(sorted(unknown))}")
    return parts


def cmd_suite(args) -> int:
    cfg = GenConfig(seed=args.seed, max_depth=args.depth, allow=args.allow)
    report = run_metatheory_suite(args.n, cfg, args.fuel, not args.no_subject_reduction)
    doc = json.dumps(report.to_json(), indent=2)
    if args.out:
        Path(args.out).write_text(doc + "\n", encoding="utf-8")
        status = "ok" if report.ok else f"{len(report.counterexamples)} counterexamples"
        print(f"{report.terms} terms, {status}; report written to {args.out}")
    else:
        print(doc)
    return OK if report.ok else COUNTEREXAMPLE


# ---------------------------------------------------------------- parser

def _add_input(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("file", nargs="?", help="program file (UTF-8)")
    src.add_argument("-e", "--expr", help="program text")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--debug-syntax", action="store_true",
                   help="accept internal forms such as hp {#1 -> v} e and #r")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lambdak", description="Row-polymorphic effect calculus toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="infer the type scheme and effect of a program")
    _add_input(p)
    p.add_argument("--closed", action="store_true", help="display the scheme with closed effects")
    p.set_defaults(run=cmd_infer)

    p = sub.add_parser("eval", help="type-check, then evaluate a program")
    _add_input(p)
    p.add_argument("--fuel", type=int, default=100_000, help="maximum number of steps")
    p.add_argument("--trace", action="store_true", help="print every reduction step")
    p.add_argument("--unsafe", action="store_true", help="evaluate even if the program is ill-typed")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("check", help="check a program against a type with the declarative rules")
    _add_input(p)
    p.add_argument("--type", help="target type (default: the inferred type)")
    p.add_argument("--effect", help="target effect row (default: the inferred effect)")
    p.add_argument("--derivation", action="store_true", help="print the derivation tree")
    p.set_defaults(run=cmd_check)

    p = sub.add_parser("suite", help="run the property suite on generated programs")
    p.add_argument("--n", type=int, default=200, help="number of generated programs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=int, default=5, help="generator depth (0-8)")
    p.add_argument("--allow", type=_allow, default=FEATURES,
                   help="comma-separated effects the programs may have (exn,st,div or none)")
    p.add_argument("--fuel", type=int, default=100_000)
    p.add_argument("--no-subject-reduction", action="store_true", help="skip re-checking every step")
    p.add_argument("--out", help="write the JSON report here instead of standard output")
    p.set_defaults(run=cmd_suite)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "fuel", 0) < 0:
        build_parser().error("--fuel must be non-negative")
    return args.run(args)


if __name__ == "__main__":
    sys.exit(main())
