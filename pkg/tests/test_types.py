import pytest
from hypothesis import given, settings, strategies as st_

from lambdak.types import (
    DIV, EMPTY, EXN, EXTEND, HEAP, INT, LABEL, REF, ROW, STAR, UNIT, KindError, Scheme,
    Session, Subst, TApp, TCon, TVar, apply_subst, compose, fn, ftv, karrow, kind_of,
    ref_type, row, st,
)
from lambdak import syntax as S

a, b = TVar(1, STAR), TVar(2, STAR)
mu, mu2 = TVar(3, ROW), TVar(4, ROW)
xi = TVar(5, HEAP)


def test_kinds_of_builtins():
    assert kind_of(row(EXN, tail=mu)) == ROW
    assert kind_of(st(xi)) == LABEL
    assert kind_of(fn(INT, row(EXN), INT)) == STAR


def test_label_kinded_variables_are_rejected():
    with pytest.raises(KindError):
        TVar(9, LABEL)


def test_arrow_kind_needs_parameters():
    with pytest.raises(KindError):
        karrow((), STAR)


def test_ill_kinded_applications_are_rejected():
    with pytest.raises(KindError):
        TApp(REF, (INT, INT))
    with pytest.raises(KindError):
        TApp(EXTEND, (INT, EMPTY))
    with pytest.raises(KindError):
        TApp(REF, (xi,))


def test_ftv():
    assert ftv(Scheme((a,), fn(a, mu, a))) == {mu}
    assert ftv(row(st(xi), tail=mu)) == {xi, mu}
    assert ftv(INT) == set()


def test_frv():
    assert S.frv(S.RefName(1)) == {1}
    assert S.frv(S.HeapBind(S.Heap(((1, S.Const(1)),)), S.RefName(1))) == set()
    assert S.frv(S.PartialAssign(2)) == {2}


def test_apply_and_compose_examples():
    s = Subst({mu: EMPTY})
    assert apply_subst(s, fn(a, row(EXN, tail=mu), a)) == fn(a, row(EXN), a)
    c = compose(Subst({a: INT}), Subst({b: a}))
    assert c.get(b) == INT
    ident = Subst({})
    s2 = Subst({a: INT, mu: row(DIV)})
    assert compose(ident, s2).mapping == s2.mapping
    assert compose(s2, ident).mapping == s2.mapping


def test_substitution_must_preserve_kinds():
    with pytest.raises(KindError):
        Subst({a: EMPTY})


def test_compose_drops_bindings_that_become_identity():
    # b := a followed by a := b leaves b unbound, not bound to b.
    c = compose(Subst({a: b}), Subst({b: a}))
    assert apply_subst(c, b) == b
    assert apply_subst(c, a) == b


def test_session_is_monotone():
    s = Session()
    ids = [s.fresh().id for _ in range(5)]
    assert ids == sorted(set(ids))


# Random types over three variables for the composition law.
_vars = [a, b, TVar(6, STAR)]
_rowvars = [mu, mu2]


def _types(depth=3):
    leaf = st_.sampled_from(_vars + [INT, UNIT])
    if depth == 0:
        return leaf
    rows = st_.builds(lambda ls, t: row(*ls, tail=t), st_.lists(st_.sampled_from([EXN, DIV]), max_size=2),
                      st_.sampled_from(_rowvars + [EMPTY]))
    return st_.one_of(leaf, st_.builds(fn, _types(depth - 1), rows, _types(depth - 1)))


def _substs():
    return st_.dictionaries(st_.sampled_from(_vars), _types(2), max_size=3).map(Subst)


@settings(max_examples=300, deadline=None)
@given(_substs(), _substs(), _types())
def test_compose_law(s2, s1, t):
    assert apply_subst(compose(s2, s1), t) == apply_subst(s2, apply_subst(s1, t))


@settings(max_examples=200, deadline=None)
@given(_substs(), _types())
def test_apply_preserves_kind(s, t):
    assert kind_of(apply_subst(s, t)) == kind_of(t)


def test_tcon_of_heap_kind_is_usable_in_types():
    h = TCon("H", HEAP)
    assert kind_of(ref_type(h, INT)) == STAR
