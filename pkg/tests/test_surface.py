import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as hs

from lambdak import syntax as S
from lambdak.surface import ParseError, parse_effect, parse_expr, parse_type, print_effect, print_expr, print_type
from lambdak.testkit import GenConfig, gen_well_typed
from lambdak.types import DIV, EMPTY, EXN, INT, ROW, STAR, Scheme, TVar, fn, row

x, y, f = S.Var("x"), S.Var("y"), S.Var("f")


def test_lambda_extends_right():
    assert parse_expr(r"\x. x y") == S.Lam("x", S.App(x, y))


def test_application_is_left_associative():
    assert parse_expr("f x y") == S.App(S.App(f, x), y)


def test_sequencing_desugars_to_bind():
    e = parse_expr("x <- ref 1; x := 2; !x")
    assert isinstance(e, S.Bind) and e.name == "x"
    assert e.body == S.Bind("_", S.app(S.Const(S.ASSIGN), x, S.Const(2)), S.App(S.Const(S.DEREF), x))


def test_catch_and_run():
    assert parse_expr("catch (throw ()) (\\u. 1)") == S.Catch(S.throw_unit(), S.Lam("u", S.Const(1)))
    assert parse_expr("run (ref 1)") == S.Run(S.App(S.Const(S.REF), S.Const(1)))


def test_let():
    assert parse_expr("let id = \\x. x in id 1") == S.Let("id", S.Lam("x", x), S.App(S.Var("id"), S.Const(1)))


def test_internal_forms_need_debug_mode():
    for text in ("#1", "hp {#1 -> 2} #1", "[add 1]", "[#1 :=]", "[catch (throw ())]"):
        with pytest.raises(ParseError):
            parse_expr(text)
        parse_expr(text, debug=True)


def test_throw_of_a_non_unit_constant_is_rejected():
    with pytest.raises(ParseError):
        parse_expr("throw 3")
    assert parse_expr("throw 3", debug=True) == S.App(S.Const(S.THROW), S.Const(3))


def test_duplicate_heap_binding_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_expr("hp {#1 -> 1, #1 -> 2} ()", debug=True)


@pytest.mark.parametrize("text,line,column", [
    ("\\x.", 1, 4),
    ("let x = 1\nin", 2, 3),
    ("(1", 1, 3),
    ("f )", 1, 3),
])
def test_parse_errors_carry_positions(text, line, column):
    with pytest.raises(ParseError) as exc:
        parse_expr(text)
    assert (exc.value.span.line, exc.value.span.column) == (line, column)


def test_parse_error_lists_expectations():
    with pytest.raises(ParseError) as exc:
        parse_expr("let 1 = 2 in 3")
    assert "identifier" in exc.value.expected


@pytest.mark.parametrize("text", [
    "1", "()", "(!)", "(:=)", "f x y", "\\x. \\y. x", "f (\\x. x)", "(\\x. x) 1",
    "x := f 1", "!(f x)", "!!x", "catch (f ()) (\\u. 2)", "run (\\u. u) ()",
    "let g = \\x. x in g (g 1)", "x <- ref 1; !x", "f (x; y)", "-3", "add -3 4",
    "f (let y = 1 in y) 2",
])
def test_print_parse_round_trip_examples(text):
    e = parse_expr(text)
    assert parse_expr(print_expr(e)) == e


# ---------------------------------------------------------------- random syntax trees

NAMES = ["x", "y", "f", "_"]


def _exprs():
    leaves = hs.one_of(
        hs.sampled_from(NAMES[:3]).map(S.Var),
        hs.integers(-5, 99).map(S.Const),
        hs.sampled_from(S.NAMED_CONSTANTS).map(S.Const),
        hs.integers(0, 9).map(S.RefName),
        hs.integers(0, 9).map(S.PartialAssign),
    )

    def grow(sub):
        name = hs.sampled_from(NAMES[:3])
        heap = hs.lists(hs.tuples(hs.integers(0, 9), sub), max_size=2, unique_by=lambda b: b[0])
        return hs.one_of(
            hs.builds(S.Lam, name, sub),
            hs.builds(S.App, sub, sub),
            hs.builds(S.Let, name, sub, sub),
            hs.builds(S.Bind, hs.sampled_from(NAMES), sub, sub),
            hs.builds(S.Catch, sub, sub),
            hs.builds(S.Run, sub),
            hs.builds(lambda h, b: S.HeapBind(S.Heap(tuple(h)), b), heap, sub),
            hs.builds(S.PartialCatch, sub),
            hs.builds(lambda a: S.PartialConst(S.ADD, (a,)), sub),
            hs.builds(lambda a, b: S.PartialConst(S.IF0, (a, b)), sub, sub),
        )

    return hs.recursive(leaves, grow, max_leaves=12)


@pytest.mark.filterwarnings("ignore::hypothesis.errors.HypothesisWarning")
@settings(max_examples=1500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(_exprs())
def test_print_parse_round_trip_on_random_trees(e):
    assert parse_expr(print_expr(e), debug=True) == e


def test_print_parse_round_trip_on_generated_programs():
    rng = random.Random(3)
    for i in range(300):
        e = gen_well_typed(GenConfig(seed=i, max_depth=rng.randint(1, 6)))
        assert parse_expr(print_expr(e)) == e


@settings(max_examples=500, deadline=None)
@given(hs.text(alphabet="\\.x1()!:=;<-#{}[]catchrunletin \n", max_size=40))
def test_arbitrary_input_raises_parse_error_or_parses(text):
    for debug in (False, True):
        try:
            parse_expr(text, debug=debug)
        except ParseError:
            pass


# ---------------------------------------------------------------- types

def test_print_types():
    a, mu = TVar(1, STAR), TVar(2, ROW)
    assert print_type(fn(INT, row(EXN, DIV), INT)) == "int -> <exn,div> int"
    assert print_type(fn(a, EMPTY, a)) == "a -> a"
    assert print_type(Scheme((a,), fn(a, mu, a))) == "forall a. a -> e1 a"
    assert print_type(fn(fn(a, mu, a), row(EXN, tail=mu), a)) == "(a -> e1 a) -> <exn|e1> a"
    assert print_effect(row(EXN, tail=mu)) == "<exn|e1>"
    assert print_effect(EMPTY) == "<>"


@pytest.mark.parametrize("text", [
    "int -> <exn,div> int",
    "a -> a",
    "forall a e1. a -> e1 a",
    "(a -> e1 b) -> <exn|e1> b",
    "ref<h1,int> -> <st<h1>,div|e1> ()",
    "(() -> <st<h1>|e1> a) -> e1 a",
])
def test_type_print_parse_round_trip(text):
    assert print_type(parse_type(text)) == text


def test_parse_empty_effect_arrow():
    t = parse_type("a -> a")
    assert t.args[1] == EMPTY


def test_parse_effect():
    assert print_effect(parse_effect("<exn,st<h>|e>")) == "<exn,st<h1>|e1>"
    assert isinstance(parse_effect("e"), TVar)


def test_kind_clash_in_type_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_type("a -> a a")
