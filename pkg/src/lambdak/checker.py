"""Declarative typing rules, checked against a given type and effect.

The checker works top-down from the target ``(t, eff)``.  Unknown types in
premises (argument types, the type of a let-bound expression, heap cell
types) are flexible metavariables solved by unification; variables that
occur free in the target are rigid.  ``st-extend`` is tried lazily: when a
check fails against a row that mentions ``st<h>``, it is retried with that
label removed.

A successful check returns a ``Derivation`` whose nodes name the rule used.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

from . import syntax as S
from .infer import _show, EMPTY_ENV, Env, ErrorKind, InferError, generalize, infer, typeof_const
from .rows import split_row
from .types import (
    EMPTY, EMPTY_SUBST, EXN, EXTEND, HEAP, ROW, STAR, ST, UNIT, Scheme, Session,
    Subst, TApp, TCon, TVar, Type, compose, extend, fn, ftv, ftv_list, head_name,
    ref_type, row, st,
)
from .unify import Reason, UnifyFailure, Unifier


class CheckError(Exception):
    def __init__(self, rule: str, message: str, expr: S.Expr | None = None):
        self.rule = rule
        self.message = message
        self.expr = expr
        super().__init__(f"({rule}) {message}")


@dataclass(frozen=True)
class Derivation:
    rule: str
    expr: S.Expr
    type: Type
    effect: Type
    premises: tuple["Derivation", ...] = ()

    def apply_subst(self, s: Subst) -> "Derivation":
        return Derivation(self.rule, self.expr, s.apply(self.type), s.apply(self.effect),
                          tuple(p.apply_subst(s) for p in self.premises))

    def rules(self) -> list[str]:
        out = [self.rule]
        for p in self.premises:
            out.extend(p.rules())
        return out

    def size(self) -> int:
        return 1 + sum(p.size() for p in self.premises)


class _Budget(Exception):
    pass


class _Bindings:
    """Triangular substitution: bindings may mention other bound variables and
    are resolved on application.  Extending copies one dict instead of
    rewriting every binding, which keeps long checks linear-ish."""

    __slots__ = ("mapping",)

    def __init__(self, mapping=None):
        self.mapping = mapping or {}

    def extend(self, s: Subst) -> "_Bindings":
        if not s.mapping:
            return self
        m = dict(self.mapping)
        m.update(s.mapping)
        return _Bindings(m)

    def apply(self, x):
        if isinstance(x, (TVar, TCon, TApp)):
            return self._resolve(x)
        if isinstance(x, Scheme):
            inner = _Bindings({v: t for v, t in self.mapping.items() if v not in x.quantified})
            return Scheme(x.quantified, inner._resolve(x.body))
        return x.apply_subst(self)

    def _resolve(self, t: Type) -> Type:
        if isinstance(t, TVar):
            b = self.mapping.get(t)
            return t if b is None else self._resolve(b)
        if isinstance(t, TApp):
            args = tuple(self._resolve(a) for a in t.args)
            if all(a is b for a, b in zip(args, t.args)):
                return t
            return TApp.trusted(t.head, args)
        return t


_NO_BINDINGS = _Bindings()


class _TriUnifier:
    """Unification straight into a triangular map, following the same
    rules as ``Unifier`` (row rewriting, tail guard, occurs check) but
    dereferencing bound variables lazily instead of composing substitutions."""

    def __init__(self, session: Session, m: dict):
        self.session = session
        self.m = m

    def walk(self, t: Type) -> Type:
        m = self.m
        while t.__class__ is TVar:
            b = m.get(t)
            if b is None:
                return t
            t = b
        return t

    def occurs(self, v: TVar, t: Type) -> bool:
        t = self.walk(t)
        if t.__class__ is TVar:
            return t == v
        if t.__class__ is TApp:
            return any(self.occurs(v, a) for a in t.args)
        return False

    def fail(self, reason, a, b):
        r = _Bindings(self.m)
        raise UnifyFailure(reason, r.apply(a), r.apply(b))

    def unify(self, a: Type, b: Type) -> None:
        a, b = self.walk(a), self.walk(b)
        if a is b:
            return
        ka = a.head.kind.result if a.__class__ is TApp else a.kind
        kb = b.head.kind.result if b.__class__ is TApp else b.kind
        if ka is not kb and ka != kb:
            self.fail(Reason.KIND_MISMATCH, a, b)
        if a.__class__ is TVar:
            if a == b:
                return
            return self.bind(a, b)
        if b.__class__ is TVar:
            return self.bind(b, a)
        if a.head is EXTEND if a.__class__ is TApp else False:
            return self.rows(a, b)
        if b.head is EXTEND if b.__class__ is TApp else False:
            return self.rows(b, a)
        if a.__class__ is TCon or b.__class__ is TCon:
            if a != b:
                self.fail(Reason.HEAD_MISMATCH, a, b)
            return
        if a.head != b.head:
            self.fail(Reason.HEAD_MISMATCH, a, b)
        for x, y in zip(a.args, b.args):
            self.unify(x, y)

    def bind(self, v: TVar, t: Type) -> None:
        if self.occurs(v, t):
            self.fail(Reason.OCCURS_CHECK, v, t)
        self.m[v] = t

    def tail(self, e: Type) -> Type:
        e = self.walk(e)
        while e.__class__ is TApp and e.head is EXTEND:
            e = self.walk(e.args[1])
        return e

    def rows(self, e1: TApp, e2: Type) -> None:
        label, rest1 = e1.args
        tail = self.tail(rest1)
        rest2 = self.find(e2, label, e1)
        if tail.__class__ is TVar and tail in self.m:
            self.fail(Reason.TAIL_ESCAPE, e1, e2)
        self.unify(rest1, rest2)

    def find(self, e: Type, label: Type, whole: Type) -> Type:
        e = self.walk(e)
        if e.__class__ is TApp and e.head is EXTEND:
            head, rest = e.args
            if head_name(head) == head_name(label):
                self.unify(label, head)
                return rest
            return TApp.trusted(EXTEND, (head, self.find(rest, label, whole)))
        if e.__class__ is TVar:
            mu = self.session.fresh(ROW)
            self.m[e] = TApp.trusted(EXTEND, (label, mu))
            return mu
        self.fail(Reason.MISSING_LABEL, e, label)


class _Checker:
    def __init__(self, session: Session, rigid: Mapping[TVar, TCon], budget: int):
        self.session = session
        self.rigid = dict(rigid)
        self.ann_vars: dict[TVar, Type] = {}
        self.budget = budget
        self.skolems = itertools.count(1)

    # -------------------------------------------------------------- helpers

    def fresh(self, kind=STAR) -> TVar:
        return self.session.fresh(kind)

    def skolem(self, kind) -> TCon:
        return TCon(f"!{kind.name}{next(self.skolems)}", kind)

    def unify(self, th: _Bindings, a: Type, b: Type, rule: str, e: S.Expr) -> _Bindings:
        m = dict(th.mapping)
        try:
            _TriUnifier(self.session, m).unify(a, b)
        except UnifyFailure as exc:
            x, y = _show(*exc.at)
            raise CheckError(rule, f"{exc.reason.value} between {x} and {y}", e) from None
        return _Bindings(m)

    def from_annotation(self, t: Type) -> Type:
        """Map an elaboration annotation into checker variables: target
        variables become their rigid constants, the rest become metas shared
        across all annotations."""
        out = {}
        for v in ftv_list(t):
            if v in self.rigid:
                out[v] = self.rigid[v]
            else:
                if v not in self.ann_vars:
                    self.ann_vars[v] = self.fresh(v.kind)
                out[v] = self.ann_vars[v]
        return _replace_vars(t, out)

    # -------------------------------------------------------------- rules

    def check(self, env: Env, e: S.Expr, t: Type, eff: Type, th: _Bindings):
        self.budget -= 1
        if self.budget < 0:
            raise _Budget
        try:
            return self.dispatch(env, e, t, eff, th)
        except CheckError as first:
            labels, tail = split_row(th.apply(eff))
            for i, lab in enumerate(labels):
                if not (isinstance(lab, TApp) and lab.head == ST):
                    continue
                smaller = row(*(labels[:i] + labels[i + 1:]), tail=tail)
                try:
                    th2, d = self.dispatch(env, e, t, smaller, th)
                except CheckError:
                    continue
                return th2, Derivation("st-extend", e, t, eff, (d,))
            raise first

    def dispatch(self, env: Env, e: S.Expr, t: Type, eff: Type, th: _Bindings):
        return getattr(self, "_" + type(e).__name__)(env, e, t, eff, th)

    def _instance(self, env, e, sc: Scheme, t, eff, th: _Bindings, rule):
        inst = Subst.trusted({v: self.fresh(v.kind) for v in sc.quantified}).apply(sc.body)
        th = self.unify(th, inst, t, rule, e)
        ann = getattr(e, "ann", None)
        if ann is not None:
            th = self.unify(th, self.from_annotation(ann), t, rule, e)
        return th, Derivation(rule, e, t, eff)

    def _Var(self, env, e: S.Var, t, eff, th):
        sc = env.lookup(e.name)
        if sc is None:
            raise CheckError("var", f"unbound variable {e.name}", e)
        return self._instance(env, e, sc, t, eff, th, "var")

    def _Const(self, env, e: S.Const, t, eff, th):
        try:
            sc = typeof_const(e.value)
        except InferError as exc:
            raise CheckError("const", str(exc), e) from None
        return self._instance(env, e, sc, t, eff, th, "const")

    def _Lam(self, env, e: S.Lam, t, eff, th):
        a, e2, r = self.fresh(), self.fresh(ROW), self.fresh()
        th = self.unify(th, t, fn(a, e2, r), "lam", e)
        if e.ann is not None:
            th = self.unify(th, self.from_annotation(e.ann), a, "lam", e)
        th, d = self.check(env.extend(e.param, Scheme.mono(a)), e.body, r, e2, th)
        return th, Derivation("lam", e, t, eff, (d,))

    def _App(self, env, e: S.App, t, eff, th):
        a = self.fresh()
        th, d1 = self.check(env, e.fn, fn(a, eff, t), eff, th)
        th, d2 = self.check(env, e.arg, a, eff, th)
        return th, Derivation("app", e, t, eff, (d1, d2))

    def _Bind(self, env, e: S.Bind, t, eff, th):
        return self.dispatch(env, S.desugar(e), t, eff, th)

    def _Let(self, env, e: S.Let, t, eff, th):
        t1 = self.fresh()
        th, d1 = self.check(env, e.bound, t1, EMPTY, th)
        sc = generalize(env.apply_subst(th), th.apply(t1))
        frozen = ftv(th.apply(t), th.apply(eff))
        sc = Scheme(tuple(v for v in sc.quantified if v not in frozen), sc.body)
        th, d2 = self.check(env.apply_subst(th).extend(e.name, sc), e.body, t, eff, th)
        return th, Derivation("let", e, t, eff, (d1, d2))

    def _Run(self, env, e: S.Run, t, eff, th):
        xi = self.skolem(HEAP)
        th, d = self.check(env, e.body, t, extend(st(xi), eff), th)
        escapes = _mentions(xi, th.apply(t), th.apply(eff), env.apply_subst(th))
        if escapes:
            raise CheckError("run", "the heap of run escapes", e)
        return th, Derivation("run", e, t, eff, (d,))

    def _Catch(self, env, e: S.Catch, t, eff, th):
        th, d1 = self.check(env, e.body, t, extend(EXN, eff), th)
        th, d2 = self.check(env, e.handler, fn(UNIT, eff, t), eff, th)
        return th, Derivation("catch", e, t, eff, (d1, d2))

    # internal forms -------------------------------------------------------

    def _HeapBind(self, env, e: S.HeapBind, t, eff, th):
        h, rest = self.fresh(HEAP), self.fresh(ROW)
        th = self.unify(th, eff, extend(st(h), rest), "heap", e)
        cells = {r: self.fresh() for r, _ in e.heap}
        env1 = env.extend_refs({r: ref_type(h, a) for r, a in cells.items()})
        prems = []
        for r, v in e.heap:
            if not S.is_value(v):
                raise CheckError("heap", f"heap cell #{r} holds a non-value", e)
            th, d = self.check(env1, v, cells[r], EMPTY, th)
            prems.append(d)
        th, d = self.check(env1, e.body, t, eff, th)
        prems.append(d)
        return th, Derivation("heap", e, t, eff, tuple(prems))

    def _ref_type(self, env, r: int, e, rule):
        t = env.refs.get(r)
        if t is None:
            raise CheckError(rule, f"unbound reference #{r}", e)
        return t

    def _RefName(self, env, e: S.RefName, t, eff, th):
        th = self.unify(th, self._ref_type(env, e.ref, e, "ref"), t, "ref", e)
        return th, Derivation("ref", e, t, eff)

    def _PartialAssign(self, env, e: S.PartialAssign, t, eff, th):
        h, content = self._ref_type(env, e.ref, e, "assign").args
        th = self.unify(th, fn(content, extend(st(h), self.fresh(ROW)), UNIT), t, "assign", e)
        return th, Derivation("assign", e, t, eff)

    def _PartialCatch(self, env, e: S.PartialCatch, t, eff, th):
        a, mu = self.fresh(), self.fresh(ROW)
        th = self.unify(th, fn(fn(UNIT, mu, a), mu, a), t, "partial-catch", e)
        th, d = self.check(env, e.body, a, extend(EXN, mu), th)
        return th, Derivation("partial-catch", e, t, eff, (d,))

    def _PartialConst(self, env, e: S.PartialConst, t, eff, th):
        # c v1 .. vn is checked as nested applications of the constant.
        term: S.Expr = S.Const(e.const)
        for v in e.captured:
            term = S.App(term, v)
        th, d = self.dispatch(env, term, t, eff, th)
        return th, Derivation("partial-const", e, t, eff, (d,))


def _replace_vars(t: Type, m: Mapping[TVar, Type]) -> Type:
    if isinstance(t, TVar):
        return m.get(t, t)
    if isinstance(t, TApp):
        return TApp(t.head, tuple(_replace_vars(a, m) for a in t.args))
    return t


def _mentions(c: TCon, *things) -> bool:
    def in_type(t: Type) -> bool:
        if isinstance(t, TCon):
            return t == c
        if isinstance(t, TApp):
            return any(in_type(a) for a in t.args)
        return False

    for x in things:
        if isinstance(x, Env):
            if any(in_type(sc.body) for sc in x.vars.values()):
                return True
            if any(in_type(rt) for rt in x.refs.values()):
                return True
        elif in_type(x):
            return True
    return False


def check(env: Env, e: S.Expr, t: Type, eff: Type, session: Session | None = None,
          budget: int = 200_000, derivation: bool = True) -> Derivation | None:
    """Derive ``env |- e : t | eff`` or raise CheckError.

    Type variables free in ``t``, ``eff`` or ``env`` are held rigid.  With
    ``derivation=False`` only success matters and None is returned.
    """
    session = session or Session(max((v.id for v in ftv_list(t, eff, env)), default=0) + 1)
    rigid_vars = ftv_list(t, eff, env)
    rigid = {v: TCon(f"'{v}", v.kind) for v in rigid_vars}
    back = {c: v for v, c in rigid.items()}
    to_rigid = Subst(rigid)
    checker = _Checker(session, rigid, budget)
    try:
        th, d = checker.check(to_rigid.apply(env), e, to_rigid.apply(t), to_rigid.apply(eff),
                              _NO_BINDINGS)
    except _Budget:
        raise CheckError("search", "st-extend search budget exhausted", e) from None
    if not derivation:
        return None
    d = d.apply_subst(th)
    return _unrigid(d, back)


def _unrigid(d: Derivation, back: Mapping[TCon, TVar]) -> Derivation:
    def go(t: Type) -> Type:
        if isinstance(t, TCon):
            return back.get(t, t)
        if isinstance(t, TApp):
            return TApp(t.head, tuple(go(a) for a in t.args))
        return t

    return Derivation(d.rule, d.expr, go(d.type), go(d.effect),
                      tuple(_unrigid(p, back) for p in d.premises))


def checks(env: Env, e: S.Expr, t: Type, eff: Type, **kw) -> bool:
    try:
        check(env, e, t, eff, **kw)
        return True
    except CheckError:
        return False


def reference_env(heap: S.Heap, h: Type, env: Env = EMPTY_ENV, session: Session | None = None) -> Env:
    """Extend ``env`` with ``r : ref<h, t_r>`` for every cell of ``heap``.

    Cell types start as fresh placeholders (cells may refer to each other) and
    are solved by inferring every value at the empty effect.
    """
    session = session or Session(max((v.id for v in ftv_list(h, env)), default=0) + 1)
    unifier = Unifier(session)
    cells = {r: session.fresh() for r, _ in heap}
    th = EMPTY_SUBST
    for r, v in heap:
        if not S.is_value(v):
            raise InferError(ErrorKind.BAD_HEAP, f"heap cell #{r} holds a non-value")
        env1 = env.extend_refs({q: ref_type(h, a) for q, a in cells.items()}).apply_subst(th)
        res = infer(env1, v, session)
        th = compose(res.subst, th)
        try:
            th = compose(unifier.unify(res.effect, EMPTY), th)
            th = compose(unifier.unify(th.apply(cells[r]), th.apply(res.type)), th)
        except UnifyFailure as exc:
            raise InferError(ErrorKind.UNIFY, f"heap cell #{r}: {exc}", cause=exc) from None
    return env.apply_subst(th).extend_refs({r: th.apply(ref_type(h, a)) for r, a in cells.items()})

