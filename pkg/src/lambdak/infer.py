"""Type and effect inference (algorithm W with row unification).

``infer`` threads substitutions exactly like the inference rules: each rule
returns the substitution it made, the type, and the effect of the expression.
Let-bound schemes are stored closed and reopened at every use.  Internal
forms (heaps, references, partial applications) are accepted too, so the same
engine can type terms produced during evaluation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping

from . import syntax as S
from .rows import effect_contains, split_row
from .types import (
    DIV, EMPTY, EMPTY_SUBST, EXN, HEAP, INT, ROW, STAR, UNIT, Scheme, Session,
    Subst, TApp, TVar, Type, compose, compose_all, extend, fn, ftv, ftv_list,
    head_name, is_arrow, ref_type, row, st,
)
from .unify import UnifyFailure, Unifier


class ErrorKind(enum.Enum):
    UNIFY = "unification-failure"
    UNBOUND = "unbound-variable"
    UNBOUND_REF = "unbound-reference"
    RUN_ESCAPE = "run-escape"
    VALUE_RESTRICTION = "value-restriction-violation"
    UNKNOWN_CONSTANT = "unknown-constant"
    BAD_HEAP = "non-value-in-heap"


class InferError(Exception):
    def __init__(self, kind: ErrorKind, message: str, span=None, cause: UnifyFailure | None = None):
        self.kind = kind
        self.message = message
        self.span = span
        self.cause = cause
        super().__init__(f"{kind.value}: {message}")


def _show(*types: Type) -> list[str]:
    """Print types for a message, sharing one variable naming."""
    from .surface import Namer, print_type  # surface depends on this module's peers
    namer = Namer()
    return [print_type(t, namer) for t in types]


# ---------------------------------------------------------------- constants

def _q(i: int, kind=STAR) -> TVar:
    # Quantified variables of constant schemes use negative ids; they are
    # always instantiated before use.
    return TVar(-i, kind)


def _constant_table() -> dict[str, Scheme]:
    a, b = _q(1), _q(2)
    h = _q(3, HEAP)
    m1, m2, m3 = _q(4, ROW), _q(5, ROW), _q(6, ROW)
    loop = fn(a, row(DIV, tail=m1), b)
    return {
        S.UNIT: Scheme((), UNIT),
        S.REF: Scheme((h, a, m1), fn(a, row(st(h), tail=m1), ref_type(h, a))),
        S.DEREF: Scheme((h, a, m1), fn(ref_type(h, a), row(st(h), DIV, tail=m1), a)),
        S.ASSIGN: Scheme((h, a, m1, m2),
                         fn(ref_type(h, a), m1, fn(a, row(st(h), tail=m2), UNIT))),
        S.THROW: Scheme((a, m1), fn(UNIT, row(EXN, tail=m1), a)),
        S.FIX: Scheme((a, b, m1, m2), fn(fn(loop, m2, loop), m2, loop)),
        S.INC: Scheme((m1,), fn(INT, m1, INT)),
        S.DEC: Scheme((m1,), fn(INT, m1, INT)),
        S.ADD: Scheme((m1, m2), fn(INT, m1, fn(INT, m2, INT))),
        S.IF0: Scheme((a, m1, m2, m3), fn(INT, m1, fn(a, m2, fn(a, m3, a)))),
    }


CONSTANTS = _constant_table()


def typeof_const(c) -> Scheme:
    if isinstance(c, int) and not isinstance(c, bool):
        return Scheme((), INT)
    try:
        return CONSTANTS[c]
    except (KeyError, TypeError):
        raise InferError(ErrorKind.UNKNOWN_CONSTANT, f"unknown constant {c!r}") from None


# ---------------------------------------------------------------- environments

@dataclass(frozen=True)
class Env:
    """Term variables mapped to schemes, plus reference names mapped to
    ``ref<h,t>`` types for terms that contain heaps."""

    vars: Mapping[str, Scheme] = field(default_factory=dict)
    let_bound: frozenset = frozenset()
    refs: Mapping[int, Type] = field(default_factory=dict)

    def extend(self, name: str, scheme: Scheme, let_bound: bool = False) -> "Env":
        lb = self.let_bound | {name} if let_bound else self.let_bound - {name}
        return Env({**self.vars, name: scheme}, lb, self.refs)

    def extend_refs(self, refs: Mapping[int, Type]) -> "Env":
        return Env(self.vars, self.let_bound, {**self.refs, **refs})

    def lookup(self, name: str) -> Scheme | None:
        return self.vars.get(name)

    def free_type_vars(self) -> list[TVar]:
        return ftv_list(list(self.vars.values()), list(self.refs.values()))

    def apply_subst(self, s: Subst) -> "Env":
        if not s.mapping:
            return self
        return Env({k: s.apply(v) for k, v in self.vars.items()}, self.let_bound,
                   {r: s.apply(t) for r, t in self.refs.items()})


EMPTY_ENV = Env()


@dataclass(frozen=True)
class InferResult:
    subst: Subst
    type: Type
    effect: Type
    elaborated: S.Expr


# ---------------------------------------------------------------- schemes

def generalize(env: Env, t: Type) -> Scheme:
    bound = ftv(env)
    return Scheme(tuple(v for v in ftv_list(t) if v not in bound), t)


def instantiate(s: Scheme, session: Session) -> Type:
    if not s.quantified:
        return s.body
    return Subst({v: session.fresh(v.kind) for v in s.quantified}).apply(s.body)


def _count_vars(t: Type, out: dict) -> None:
    if isinstance(t, TVar):
        out[t] = out.get(t, 0) + 1
    elif isinstance(t, TApp):
        for a in t.args:
            _count_vars(a, out)


def close_type(s: Scheme) -> Scheme:
    """Close the effects along the arrow spine whose tail variable is
    quantified and mentioned nowhere else in the type."""
    counts: dict = {}
    _count_vars(s.body, counts)
    dropped = []

    def go(t: Type) -> Type:
        if not is_arrow(t):
            return t
        arg, eff, res = t.args
        labels, tail = split_row(eff)
        if isinstance(tail, TVar) and tail in s.quantified and counts[tail] == 1:
            dropped.append(tail)
            eff = row(*labels)
        return fn(arg, eff, go(res))

    body = go(s.body)
    return Scheme(tuple(v for v in s.quantified if v not in dropped), body)


def open_type(t: Type, session: Session) -> Type:
    """Give every closed effect on the arrow spine a fresh tail variable."""
    if not is_arrow(t):
        return t
    arg, eff, res = t.args
    labels, tail = split_row(eff)
    if tail == EMPTY:
        eff = row(*labels, tail=session.fresh(ROW))
    return fn(arg, eff, open_type(res, session))


# ---------------------------------------------------------------- inference

class Inferencer:
    def __init__(self, session: Session, simplify: bool = True):
        self.session = session
        self.simplify = simplify
        self.unifier = Unifier(session)

    def fresh(self, kind=STAR) -> TVar:
        return self.session.fresh(kind)

    def unify(self, t1: Type, t2: Type, node: S.Expr, kind=ErrorKind.UNIFY, what: str = "") -> Subst:
        try:
            return self.unifier.unify(t1, t2)
        except UnifyFailure as exc:
            a, b, x, y = _show(t1, t2, *exc.at)
            msg = f"cannot unify {a} with {b}" + (f" ({what})" if what else "")
            msg += f": {exc.reason.value}"
            if (x, y) != (a, b):
                msg += f" between {x} and {y}"
            raise InferError(kind, msg, getattr(node, "span", None), exc) from None

    def infer(self, env: Env, e: S.Expr):
        """Returns (subst, type, effect, elaborated)."""
        method = getattr(self, "_infer_" + type(e).__name__)
        return method(env, e)

    def _infer_Var(self, env, e: S.Var):
        sc = env.lookup(e.name)
        if sc is None:
            raise InferError(ErrorKind.UNBOUND, f"unbound variable {e.name}", e.span)
        t = instantiate(sc, self.session)
        if self.simplify and e.name in env.let_bound:
            t = open_type(t, self.session)
        return EMPTY_SUBST, t, self.fresh(ROW), replace(e, ann=t)

    def _infer_Const(self, env, e: S.Const):
        try:
            t = instantiate(typeof_const(e.value), self.session)
        except InferError as exc:
            exc.span = e.span
            raise
        return EMPTY_SUBST, t, self.fresh(ROW), replace(e, ann=t)

    def _infer_Lam(self, env, e: S.Lam):
        a = self.fresh()
        th, t2, e2, body = self.infer(env.extend(e.param, Scheme.mono(a)), e.body)
        pa = th.apply(a)
        return th, fn(pa, e2, t2), self.fresh(ROW), replace(e, body=body, ann=a)

    def _infer_App(self, env, e: S.App):
        th1, t1, e1, f = self.infer(env, e.fn)
        th2, t2, e2, x = self.infer(env.apply_subst(th1), e.arg)
        a = self.fresh()
        th3 = self.unify(th2.apply(t1), fn(t2, e2, a), e, what="application")
        th4 = self.unify(th3.apply(th2.apply(e1)), th3.apply(e2), e, what="effects of function and argument")
        th43 = compose(th4, th3)
        return (compose_all(th4, th3, th2, th1), th43.apply(a), th43.apply(e2),
                replace(e, fn=f, arg=x))

    def _infer_Bind(self, env, e: S.Bind):
        return self.infer(env, S.App(S.Lam(e.name, e.body, span=e.span), e.bound, span=e.span))

    def _infer_Let(self, env, e: S.Let):
        th1, t1, e1, bound = self.infer(env, e.bound)
        th2 = self.unify(e1, EMPTY, e.bound, ErrorKind.VALUE_RESTRICTION,
                         "a let-bound expression must be total to be generalized")
        th21 = compose(th2, th1)
        env2 = env.apply_subst(th21)
        sc = generalize(env2, th2.apply(t1))
        stored = close_type(sc) if self.simplify else sc
        th3, t, eff, body = self.infer(env2.extend(e.name, stored, let_bound=True), e.body)
        return compose(th3, th21), t, eff, replace(e, bound=bound, body=body, ann=sc)

    def _infer_Run(self, env, e: S.Run):
        th1, t, eff, body = self.infer(env, e.body)
        xi, mu = self.fresh(HEAP), self.fresh(ROW)
        th2 = self.unify(eff, row(st(xi), tail=mu), e, what="run expects a stateful body")
        h = th2.apply(xi)
        th21 = compose(th2, th1)
        t_out, mu_out = th2.apply(t), th2.apply(mu)
        if not isinstance(h, TVar):
            raise InferError(ErrorKind.RUN_ESCAPE, f"run body uses the concrete heap {_show(h)[0]}", e.span)
        if h in ftv(env.apply_subst(th21), t_out, mu_out):
            hs, ts, ms = _show(h, t_out, mu_out)
            raise InferError(ErrorKind.RUN_ESCAPE,
                             f"heap {hs} escapes run through the environment, result type {ts} or effect {ms}",
                             e.span)
        return th21, t_out, mu_out, replace(e, body=body, ann=xi)

    def _infer_Catch(self, env, e: S.Catch):
        th1, t1, e1, body = self.infer(env, e.body)
        th2, t2, e2, handler = self.infer(env.apply_subst(th1), e.handler)
        th3 = self.unify(th2.apply(e1), extend(EXN, e2), e.body, what="catch body effect")
        th4 = self.unify(th3.apply(t2), fn(UNIT, th3.apply(e2), th3.apply(th2.apply(t1))),
                         e.handler, what="catch handler")
        th43 = compose(th4, th3)
        return (compose_all(th4, th3, th2, th1), th43.apply(th2.apply(t1)), th43.apply(e2),
                replace(e, body=body, handler=handler))

    # internal forms ---------------------------------------------------------

    def _infer_RefName(self, env, e: S.RefName):
        t = env.refs.get(e.ref)
        if t is None:
            raise InferError(ErrorKind.UNBOUND_REF, f"unbound reference #{e.ref}", e.span)
        return EMPTY_SUBST, t, self.fresh(ROW), e

    def _infer_PartialAssign(self, env, e: S.PartialAssign):
        t = env.refs.get(e.ref)
        if t is None:
            raise InferError(ErrorKind.UNBOUND_REF, f"unbound reference #{e.ref}", e.span)
        h, content = t.args
        return EMPTY_SUBST, fn(content, row(st(h), tail=self.fresh(ROW)), UNIT), self.fresh(ROW), e

    def _infer_PartialConst(self, env, e: S.PartialConst):
        t = instantiate(typeof_const(e.const), self.session)
        th = EMPTY_SUBST
        for v in e.captured:
            thv, tv, _, _ = self.infer(env.apply_subst(th), v)
            th = compose(thv, th)
            t = thv.apply(t)
            if not is_arrow(t):
                raise InferError(ErrorKind.UNIFY, f"{e.const} given too many arguments", e.span)
            th_arg = self.unify(t.args[0], tv, e, what=f"argument of {e.const}")
            th = compose(th_arg, th)
            t = th_arg.apply(t.args[2])
        return th, t, self.fresh(ROW), e

    def _infer_PartialCatch(self, env, e: S.PartialCatch):
        th1, t, eff, body = self.infer(env, e.body)
        mu = self.fresh(ROW)
        th2 = self.unify(eff, extend(EXN, mu), e, what="catch body effect")
        t2, mu2 = th2.apply(t), th2.apply(mu)
        handler = fn(UNIT, mu2, t2)
        return compose(th2, th1), fn(handler, mu2, t2), self.fresh(ROW), replace(e, body=body)

    def _infer_HeapBind(self, env, e: S.HeapBind):
        xi = self.fresh(HEAP)
        cells = {r: self.fresh() for r, _ in e.heap}
        env1 = env.extend_refs({r: ref_type(xi, a) for r, a in cells.items()})
        th = EMPTY_SUBST
        values = []
        for r, v in e.heap:
            if not S.is_value(v):
                raise InferError(ErrorKind.BAD_HEAP, f"heap cell #{r} holds a non-value", e.span)
            thv, tv, ev, v2 = self.infer(env1.apply_subst(th), v)
            th = compose(thv, th)
            th_e = self.unify(ev, EMPTY, v, what="heap values are total")
            th = compose(th_e, th)
            th_t = self.unify(th.apply(cells[r]), th_e.apply(tv), v, what=f"contents of #{r}")
            th = compose(th_t, th)
            values.append((r, v2))
        thb, t, eff, body = self.infer(env1.apply_subst(th), e.body)
        th = compose(thb, th)
        mu = self.fresh(ROW)
        th_s = self.unify(eff, row(st(th.apply(xi)), tail=mu), e, what="heap binding is stateful")
        th = compose(th_s, th)
        return th, th_s.apply(t), th_s.apply(eff), replace(
            e, heap=S.Heap(tuple(values)), body=body, ann=xi)


def _annotate(e: S.Expr, th: Subst) -> S.Expr:
    ann = getattr(e, "ann", None)
    e = S.map_children(e, lambda c: _annotate(c, th))
    if ann is not None:
        e = replace(e, ann=th.apply(ann))
    return e


def infer(env: Env, e: S.Expr, session: Session | None = None, simplify: bool = True) -> InferResult:
    """Infer the type and effect of ``e`` under ``env``.

    The returned substitution is the one accumulated by the algorithm; the
    type and effect already have it applied, and so do all annotations in the
    elaborated tree.
    """
    session = session or Session()
    th, t, eff, elab = Inferencer(session, simplify).infer(env, e)
    return InferResult(th, th.apply(t), th.apply(eff), _annotate(elab, th))


@dataclass(frozen=True)
class Typing:
    """Outcome of typing a closed program."""
    scheme: Scheme
    type: Type
    effect: Type
    result: InferResult


def infer_program(e: S.Expr, session: Session | None = None, simplify: bool = True) -> Typing:
    r = infer(EMPTY_ENV, e, session, simplify)
    return Typing(generalize(EMPTY_ENV, r.type), r.type, r.effect, r)


def effect_labels(eff: Type) -> set[str]:
    return {head_name(l) for l in split_row(eff)[0]}


__all__ = [
    "Env", "EMPTY_ENV", "InferError", "ErrorKind", "InferResult", "Typing",
    "typeof_const", "generalize", "instantiate", "close_type", "open_type",
    "infer", "infer_program", "effect_labels", "effect_contains",
]
