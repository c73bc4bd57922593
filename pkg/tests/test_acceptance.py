"""Acceptance criteria.  Each test prints one PASS/FAIL line."""
import random
import time

import pytest
from oracles import TypeGen, diamond_terms, equivalent, ground_unifiers, is_instance, reachable_within

from lambdak import syntax as S
from lambdak.evaluator import (
    AnswerKind, FaultKind, FaultyOutcome, Finished, FuelExhausted, all_reductions, evaluate, trace,
)
from lambdak.infer import EMPTY_ENV, ErrorKind, InferError, effect_labels, infer, infer_program
from lambdak.rows import effect_eq, type_eq
from lambdak.surface import Namer, parse_expr, print_effect, print_type
from lambdak.testkit import (
    FEATURES, GenConfig, Report, check_faulty, check_term, corpus, faulty_catalogue,
)
from lambdak.types import DIV, EMPTY, EXN, ROW, Session, TVar, apply_subst, ftv_list, row
from lambdak.unify import UnifyFailure, unify


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, detail: str, elapsed: float):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}")
        assert ok, detail
    return emit


def test_criterion_1_golden_types(verdict):
    t0 = time.time()
    ident = print_type(infer_program(parse_expr("let id = \\x. x in id")).scheme)
    thrown = infer_program(parse_expr("throw ()")).effect
    caught = infer_program(parse_expr("catch (throw ()) (\\x. ())"))
    namer = Namer()
    ok = (ident == "forall a e1. a -> e1 a"
          and "exn" in effect_labels(thrown)
          and "exn" not in effect_labels(caught.effect)
          and print_type(caught.type) == "()")
    elapsed = time.time() - t0
    verdict(1, ok and elapsed < 1,
            f"id : {ident}; throw () ! {print_effect(thrown, namer)}; catch ! {print_effect(caught.effect, namer)}",
            elapsed)


def test_criterion_2_row_unification(verdict):
    t0 = time.time()
    mu, mu1, mu2 = TVar(1, ROW), TVar(2, ROW), TVar(3, ROW)
    closes = unify(row(EXN, tail=mu), row(EXN)).mapping == {mu: EMPTY}
    s = unify(row(EXN, tail=mu1), row(DIV, tail=mu2), Session(100))
    left, right = apply_subst(s, row(EXN, tail=mu1)), apply_subst(s, row(DIV, tail=mu2))
    fresh = s.get(mu1).args[1]
    common = (effect_eq(left, right) and isinstance(fresh, TVar) and fresh not in (mu1, mu2)
              and effect_eq(left, row(EXN, DIV, tail=fresh)))
    verdict(2, closes and common, f"closing {closes}, common row {print_effect(left)}", time.time() - t0)


def test_criterion_3_unifier_soundness_and_generality(verdict):
    t0 = time.time()
    g = TypeGen(random.Random(3))
    successes = grounds = 0
    bad = []
    for _ in range(10_000):
        a, b = g.pair()
        vs = ftv_list(a, b)
        gu = list(ground_unifiers(a, b, vs))
        grounds += len(gu)
        try:
            th = unify(a, b, Session(100))
        except UnifyFailure:
            if gu:
                bad.append(("missed", a, b))
            continue
        successes += 1
        ta, tb = apply_subst(th, a), apply_subst(th, b)
        if not (type_eq(ta, tb) and equivalent(ta, tb)):
            bad.append(("unsound", a, b))
            continue
        images = {v: apply_subst(th, v) for v in vs}
        if not all(is_instance(images, m) for m in gu):
            bad.append(("not most general", a, b))
    elapsed = time.time() - t0
    verdict(3, not bad and elapsed < 30,
            f"10000 pairs, {successes} unified, {grounds} ground unifiers checked, {len(bad)} failures",
            elapsed)


def test_criterion_4_subject_reduction(verdict):
    t0 = time.time()
    report = Report()
    for e in corpus(GenConfig(seed=4, max_depth=6, allow=FEATURES), 1000):
        check_term(e, report)
    elapsed = time.time() - t0
    sr = [c for c in report.counterexamples if c["property"] == "subject-reduction"]
    verdict(4, not sr and report.terms == 1000 and elapsed < 60,
            f"1000 terms, {report.counts['subject-reduction steps']} steps re-checked, {len(sr)} failures, "
            f"{len(report.findings)} outer-heap findings", elapsed)


def _typed_corpus(allow, seed, n=500, depth=5):
    for e in corpus(GenConfig(seed=seed, max_depth=depth, allow=allow), n):
        yield e, effect_labels(infer(EMPTY_ENV, e, simplify=False).effect)


def test_criterion_5_exceptions(verdict):
    t0 = time.time()
    bad = checked = 0
    for e, labels in _typed_corpus({"st", "div"}, 5):
        assert "exn" not in labels
        checked += 1
        out = evaluate(e)
        if isinstance(out, Finished) and out.kind in (AnswerKind.EXCEPTION, AnswerKind.HEAP_EXCEPTION):
            bad += 1
    verdict(5, bad == 0 and checked == 500, f"{checked} terms without exn, {bad} uncaught exceptions",
            time.time() - t0)


def test_criterion_6_state(verdict):
    t0 = time.time()
    bad = checked = with_run = 0
    for e, labels in _typed_corpus({"exn", "div"}, 6):
        assert "st" not in labels
        checked += 1
        with_run += any(isinstance(s, S.Run) for s in S.subterms(e))
        out = evaluate(e)
        if isinstance(out, Finished) and out.kind in (AnswerKind.HEAP_VALUE, AnswerKind.HEAP_EXCEPTION):
            bad += 1
        elif not isinstance(out, Finished):
            bad += 1
    verdict(6, bad == 0 and checked == 500 and with_run > 50,
            f"{checked} terms without st ({with_run} using run), {bad} heap answers or failures",
            time.time() - t0)


def test_criterion_7_divergence(verdict):
    t0 = time.time()
    exhausted = other = checked = max_steps = 0
    for e, labels in _typed_corpus({"exn", "st"}, 7, depth=6):
        assert "div" not in labels
        checked += 1
        out = evaluate(e, 100_000)
        if isinstance(out, FuelExhausted):
            exhausted += 1
        elif isinstance(out, Finished):
            max_steps = max(max_steps, out.steps)
        else:
            other += 1
    verdict(7, exhausted == 0 and other == 0 and checked == 500,
            f"{checked} terms without div (depth 6), {exhausted} fuel exhaustions, {other} other failures, "
            f"at most {max_steps} steps",
            time.time() - t0)


def test_criterion_8_faulty_catalogue(verdict):
    t0 = time.time()
    report = Report()
    check_faulty(report)
    reasons = {t.reason for t in faulty_catalogue()}
    n = report.counts["faulty templates"]
    verdict(8, report.ok and reasons == set(FaultKind),
            f"{n} templates over {len(reasons)} fault kinds, {len(report.counterexamples)} accepted",
            time.time() - t0)


def test_criterion_9_escape(verdict):
    t0 = time.time()
    try:
        infer_program(parse_expr("run (x <- ref 1; x)"))
        kind = None
    except InferError as exc:
        kind = exc.kind
    out = evaluate(parse_expr("run (hp {#1 -> 1} #1)", debug=True))
    unsafe = evaluate(parse_expr("run (x <- ref 1; x)"))
    ok = (kind is ErrorKind.RUN_ESCAPE
          and isinstance(out, FaultyOutcome) and out.reason is FaultKind.ESCAPING_REFERENCE
          and isinstance(unsafe, FaultyOutcome) and unsafe.reason is FaultKind.ESCAPING_REFERENCE)
    shown = out.reason.value if isinstance(out, FaultyOutcome) else type(out).__name__
    verdict(9, ok, f"inference: {kind and kind.value}; evaluation: {shown}",
            time.time() - t0)


def test_criterion_10_determinism_and_diamond(verdict):
    t0 = time.time()
    rng = random.Random(10)
    differing = 0
    terms = corpus(GenConfig(seed=10, max_depth=4), 5000)
    for e in terms + [rng.choice(terms) for _ in range(5000)]:
        if trace(e, 5000) != trace(e, 5000):
            differing += 1
    diverged = 0
    for e in diamond_terms(random.Random(11), 100):
        reducts = [t for rule, t in all_reductions(e) if rule in ("lift", "merge")]
        reached = [reachable_within(t, 2) for t in reducts]
        if len(reducts) < 2 or not all(a & b for a in reached for b in reached):
            diverged += 1
    verdict(10, differing == 0 and diverged == 0,
            f"10000 replays, {differing} differing; 100 lift/merge diamonds, {diverged} not joining",
            time.time() - t0)
