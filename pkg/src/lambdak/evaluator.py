"""Small-step reduction with heaps, exceptions and state isolation.

A term is decomposed along its evaluation path from the root.  Every node on
that path is checked for a faulty shape first, then for a redex rooted at the
node, so the outermost applicable rule wins.  Only the order of ``lift`` and
``merge`` is genuinely nondeterministic; ``all_reductions`` exposes every
choice so that the diamond property can be tested.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Union

from . import syntax as S


class AnswerKind(enum.Enum):
    VALUE = "Value"
    EXCEPTION = "Exception"
    HEAP_VALUE = "HeapValue"
    HEAP_EXCEPTION = "HeapException"


class FaultKind(enum.Enum):
    UNDEFINED = "Undefined"
    ESCAPING_READ = "EscapingRead"
    ESCAPING_WRITE = "EscapingWrite"
    ESCAPING_REFERENCE = "EscapingReference"
    NOT_A_FUNCTION = "NotAFunction"
    NOT_A_REFERENCE = "NotAReference"
    NOT_AN_EXCEPTION = "NotAnException"


# ---------------------------------------------------------------- step results

@dataclass(frozen=True)
class Reduced:
    next: S.Expr
    rule: str


@dataclass(frozen=True)
class Answer:
    kind: AnswerKind


@dataclass(frozen=True)
class Faulty:
    reason: FaultKind
    at: S.Expr


@dataclass(frozen=True)
class Stuck:
    at: S.Expr


StepResult = Union[Reduced, Answer, Faulty, Stuck]


# ---------------------------------------------------------------- outcomes

@dataclass(frozen=True)
class Finished:
    answer: S.Expr
    kind: AnswerKind
    steps: int


@dataclass(frozen=True)
class FaultyOutcome:
    reason: FaultKind
    at: S.Expr
    last: S.Expr
    steps: int


@dataclass(frozen=True)
class FuelExhausted:
    last: S.Expr
    steps: int


@dataclass(frozen=True)
class StuckOutcome:
    at: S.Expr
    steps: int


EvalOutcome = Union[Finished, FaultyOutcome, FuelExhausted, StuckOutcome]


# ---------------------------------------------------------------- classification

def is_exception(e: S.Expr) -> bool:
    return S.is_throw(e)


def classify(e: S.Expr) -> AnswerKind | None:
    """Answer kind of ``e``, or None when ``e`` is not an answer."""
    if S.is_value(e):
        return AnswerKind.VALUE
    if is_exception(e):
        return AnswerKind.EXCEPTION
    if isinstance(e, S.HeapBind):
        if S.is_value(e.body):
            return AnswerKind.HEAP_VALUE
        if is_exception(e.body):
            return AnswerKind.HEAP_EXCEPTION
    return None


def _is_w(e: S.Expr) -> bool:
    return S.is_basic(e) or is_exception(e)


# ---------------------------------------------------------------- delta

class _Undefined(Exception):
    pass


_ARITH = (S.INC, S.DEC, S.ADD, S.IF0)


def _int(v: S.Expr) -> int:
    if isinstance(v, S.Const) and isinstance(v.value, int):
        return v.value
    raise _Undefined


def delta(c: S.Expr, v: S.Expr) -> S.Expr | None:
    """Interpret a constant (or partially applied constant) on a closed value.

    Returns None where the interpretation is undefined.
    """
    try:
        return _delta(c, v)
    except _Undefined:
        return None


def _delta(c: S.Expr, v: S.Expr) -> S.Expr:
    if isinstance(c, S.Const):
        if c.value == S.INC:
            return S.Const(_int(v) + 1)
        if c.value == S.DEC:
            return S.Const(_int(v) - 1)
        if c.value in (S.ADD, S.IF0):
            return S.PartialConst(c.value, (S.Const(_int(v)),))
        if c.value == S.ASSIGN and isinstance(v, S.RefName):
            return S.PartialAssign(v.ref)
    if isinstance(c, S.PartialConst):
        if c.const == S.ADD and len(c.captured) == 1:
            return S.Const(_int(c.captured[0]) + _int(v))
        if c.const == S.IF0 and len(c.captured) == 1:
            return S.PartialConst(S.IF0, c.captured + (v,))
        if c.const == S.IF0 and len(c.captured) == 2:
            return c.captured[1] if _int(c.captured[0]) == 0 else v
    raise _Undefined


def _is_delta_head(f: S.Expr) -> bool:
    return (isinstance(f, S.PartialConst)
            or (isinstance(f, S.Const) and f.value in _ARITH + (S.ASSIGN,)))


# ---------------------------------------------------------------- contexts

Plug = Callable[[S.Expr], S.Expr]


def _identity(e: S.Expr) -> S.Expr:
    return e


def _frame_child(e: S.Expr, with_catch: bool):
    """The hole of a single X frame (or R frame when ``with_catch``).

    Returns (child, rebuild) or None when ``e`` is not such a frame or its
    hole would be a value.
    """
    if isinstance(e, S.App):
        if not S.is_value(e.fn):
            return e.fn, lambda c, e=e: replace(e, fn=c)
        if not S.is_value(e.arg):
            return e.arg, lambda c, e=e: replace(e, arg=c)
        return None
    if isinstance(e, S.Let) and not S.is_value(e.bound):
        return e.bound, lambda c, e=e: replace(e, bound=c)
    if with_catch and isinstance(e, S.Catch) and not S.is_value(e.body):
        return e.body, lambda c, e=e: replace(e, body=c)
    return None


def decompose(e: S.Expr, with_catch: bool) -> tuple[Plug, S.Expr, int]:
    """Split ``e`` as ``K[focus]`` with K the maximal X (or R) context.

    Returns the plug function, the focus and the number of frames in K.
    """
    frames = []
    while True:
        step = _frame_child(e, with_catch)
        if step is None:
            break
        child, rebuild = step
        frames.append(rebuild)
        e = child

    def plug(x: S.Expr) -> S.Expr:
        for rebuild in reversed(frames):
            x = rebuild(x)
        return x

    return plug, e, len(frames)


def _e_child(e: S.Expr):
    """The hole of a single E frame, or None."""
    step = _frame_child(e, with_catch=True)
    if step is not None:
        return step
    if isinstance(e, S.HeapBind):
        return e.body, lambda c, e=e: replace(e, body=c)
    if isinstance(e, S.Run):
        return e.body, lambda c, e=e: replace(e, body=c)
    return None


# ---------------------------------------------------------------- machine

class Machine:
    """Owns the supply of fresh reference names for one evaluation."""

    def __init__(self, start: int = 1):
        self._refs = itertools.count(start)

    @classmethod
    def for_term(cls, e: S.Expr) -> "Machine":
        return cls(max(S.all_refs(e), default=0) + 1)

    def fresh_ref(self) -> int:
        return next(self._refs)

    # -------------------------------------------------------------- rules

    def rules_at(self, e: S.Expr) -> Iterator[tuple[str, S.Expr]]:
        """Every rule whose redex is rooted exactly at ``e``, in priority order."""
        if isinstance(e, S.App) and S.is_value(e.fn) and S.is_value(e.arg):
            f, v = e.fn, e.arg
            if _is_delta_head(f):
                out = delta(f, v)
                if out is not None:
                    yield "delta", out
            if isinstance(f, S.Lam):
                yield "beta", self._instantiate(f.body, f.param, v)
            if f == S.Const(S.FIX):
                yield "fix", self._fix(v)
            if f == S.Const(S.REF):
                r = self.fresh_ref()
                yield "alloc", S.HeapBind(S.Heap(((r, v),)), S.RefName(r))
            if isinstance(f, S.PartialCatch):
                yield "catchp", S.Catch(f.body, v)
        if isinstance(e, S.Let) and S.is_value(e.bound):
            yield "let", self._instantiate(e.body, e.name, e.bound)
        if isinstance(e, S.Catch):
            if is_exception(e.body):
                yield "catcht", S.App(e.handler, e.body.arg)
            elif S.is_value(e.body):
                yield "catchv", e.body
        if isinstance(e, S.HeapBind):
            yield from self._heap_rules(e)
        if isinstance(e, (S.App, S.Let, S.Catch)):
            plug, focus, depth = decompose(e, with_catch=True)
            if depth and isinstance(focus, S.HeapBind):
                yield "lift", self._lift(plug, focus)
        if isinstance(e, S.Run):
            yield from self._run_rules(e)
        if isinstance(e, (S.App, S.Let)):
            plug, focus, depth = decompose(e, with_catch=False)
            if depth and is_exception(focus):
                yield "throw", focus

    def _heap_rules(self, e: S.HeapBind):
        plug, focus, _ = decompose(e.body, with_catch=True)
        if (isinstance(focus, S.App) and focus.fn == S.Const(S.DEREF)
                and isinstance(focus.arg, S.RefName) and focus.arg.ref in e.heap.dom()):
            yield "read", replace(e, body=plug(e.heap.get(focus.arg.ref)))
        if (isinstance(focus, S.App) and isinstance(focus.fn, S.PartialAssign)
                and S.is_value(focus.arg) and focus.fn.ref in e.heap.dom()):
            heap = e.heap.set(focus.fn.ref, focus.arg)
            yield "write", replace(e, heap=heap, body=plug(S.unit()))
        if isinstance(e.body, S.HeapBind):
            inner = e.body
            clash = e.heap.dom() & inner.heap.dom()
            if clash:
                inner = S.rename_heap_binders(inner, {r: self.fresh_ref() for r in clash})
            yield "merge", S.HeapBind(e.heap + inner.heap, inner.body, span=e.span)

    def _lift(self, plug: Plug, hb: S.HeapBind) -> S.Expr:
        clash = hb.heap.dom() & S.frv(plug(S.unit()))
        if clash:
            hb = S.rename_heap_binders(hb, {r: self.fresh_ref() for r in clash})
        return S.HeapBind(hb.heap, plug(hb.body))

    def _run_rules(self, e: S.Run):
        body = e.body
        heap = body.heap if isinstance(body, S.HeapBind) else None
        inner = body.body if heap is not None else body

        def wrap(x: S.Expr) -> S.Expr:
            return S.Run(S.HeapBind(heap, x) if heap is not None else x)

        if isinstance(inner, S.Lam):
            yield "runl", S.Lam(inner.param, wrap(inner.body))
        elif isinstance(inner, S.PartialCatch):
            yield "runc", S.PartialCatch(wrap(inner.body))
        elif _is_w(inner) and (heap is None or not (S.frv(inner) & heap.dom())):
            yield "runh", inner

    def _instantiate(self, body: S.Expr, name: str, v: S.Expr) -> S.Expr:
        out = S.subst_var(body, name, v)
        if any(isinstance(s, S.HeapBind) for s in S.subterms(v)):
            out = self._freshen(out)
        return out

    def _fix(self, v: S.Expr) -> S.Expr:
        x = S._fresh_name("x", S.fv(v))
        out = S.App(v, S.Lam(x, S.App(S.App(S.Const(S.FIX), v), S.Var(x))))
        if any(isinstance(s, S.HeapBind) for s in S.subterms(v)):
            out = self._freshen(out)
        return out

    def _freshen(self, e: S.Expr) -> S.Expr:
        """Rename heap binders that occur more than once so every heap in the
        term binds globally distinct names (copies arise from duplicating a
        lambda whose body holds a heap)."""
        seen: set[int] = set()

        def go(e: S.Expr) -> S.Expr:
            if isinstance(e, S.HeapBind):
                dup = e.heap.dom() & seen
                if dup:
                    e = S.rename_heap_binders(e, {r: self.fresh_ref() for r in dup})
                seen.update(e.heap.dom())
            return S.map_children(e, go)

        return go(e)

    # -------------------------------------------------------------- faults

    def fault_at(self, e: S.Expr) -> FaultKind | None:
        """Faulty shape rooted at ``e`` (a node on the evaluation path)."""
        if isinstance(e, S.App) and S.is_value(e.fn):
            f = e.fn
            if isinstance(f, S.RefName) or (
                    isinstance(f, S.Const) and (f.value == S.UNIT or isinstance(f.value, int))):
                return FaultKind.NOT_A_FUNCTION
            if not S.is_value(e.arg):
                return None
            v = e.arg
            if f == S.Const(S.DEREF) and not isinstance(v, S.RefName):
                return FaultKind.NOT_A_REFERENCE
            if f == S.Const(S.ASSIGN) and not isinstance(v, S.RefName):
                return FaultKind.NOT_A_REFERENCE
            if f == S.Const(S.THROW) and v != S.unit():
                return FaultKind.NOT_AN_EXCEPTION
            if _is_delta_head(f) and delta(f, v) is None:
                return FaultKind.UNDEFINED
        if isinstance(e, S.App) and isinstance(e.fn, S.App) and e.fn.fn == S.Const(S.ASSIGN):
            target = e.fn.arg
            if S.is_value(target) and not isinstance(target, S.RefName):
                return FaultKind.NOT_A_REFERENCE
        if isinstance(e, S.Run):
            body = e.body
            dom = body.heap.dom() if isinstance(body, S.HeapBind) else set()
            inner = body.body if isinstance(body, S.HeapBind) else body
            if _is_w(inner) and S.frv(inner) & dom:
                return FaultKind.ESCAPING_REFERENCE
            _, focus, _ = decompose(inner, with_catch=True)
            if (isinstance(focus, S.App) and focus.fn == S.Const(S.DEREF)
                    and isinstance(focus.arg, S.RefName) and focus.arg.ref not in dom):
                return FaultKind.ESCAPING_READ
            if (isinstance(focus, S.App) and isinstance(focus.fn, S.PartialAssign)
                    and S.is_value(focus.arg) and focus.fn.ref not in dom):
                return FaultKind.ESCAPING_WRITE
        return None

    # -------------------------------------------------------------- stepping

    def path(self, e: S.Expr) -> Iterator[tuple[S.Expr, Plug]]:
        """Nodes on the evaluation path, outermost first, with their plugs."""
        plug: Plug = _identity
        while True:
            yield e, plug
            step = _e_child(e)
            if step is None:
                return
            child, rebuild = step
            plug = (lambda p, r: (lambda x: p(r(x))))(plug, rebuild)
            e = child

    def step(self, e: S.Expr) -> StepResult:
        for node, _ in self.path(e):
            fault = self.fault_at(node)
            if fault is not None:
                return Faulty(fault, node)
        for node, plug in self.path(e):
            for rule, out in self.rules_at(node):
                return Reduced(plug(out), rule)
        kind = classify(e)
        if kind is not None:
            return Answer(kind)
        return Stuck(e)

    def all_reductions(self, e: S.Expr) -> list[tuple[str, S.Expr]]:
        """Every one-step reduct, taking each rule at each position on the
        evaluation path (the deterministic ``step`` takes only the first)."""
        out = []
        for node, plug in self.path(e):
            for rule, res in self.rules_at(node):
                out.append((rule, plug(res)))
        return out


def step(e: S.Expr, machine: Machine | None = None) -> StepResult:
    return (machine or Machine.for_term(e)).step(e)


def all_reductions(e: S.Expr, machine: Machine | None = None) -> list[tuple[str, S.Expr]]:
    return (machine or Machine.for_term(e)).all_reductions(e)


def iterate(e: S.Expr, fuel: int, on_step=None) -> EvalOutcome:
    """Reduce ``e`` for at most ``fuel`` steps.

    ``on_step(n, rule, term)`` is called after every reduction.
    """
    if fuel < 0:
        raise ValueError("fuel must be non-negative")
    machine = Machine.for_term(e)
    steps = 0
    while True:
        res = machine.step(e)
        if isinstance(res, Answer):
            return Finished(e, res.kind, steps)
        if isinstance(res, Faulty):
            return FaultyOutcome(res.reason, res.at, e, steps)
        if isinstance(res, Stuck):
            return StuckOutcome(e, steps)
        if steps >= fuel:
            return FuelExhausted(e, steps)
        e = res.next
        steps += 1
        if on_step is not None:
            on_step(steps, res.rule, e)


def evaluate(e: S.Expr, fuel: int = 100_000) -> EvalOutcome:
    return iterate(S.desugar(e), fuel)


def trace(e: S.Expr, fuel: int = 100_000) -> tuple[list[tuple[str, S.Expr]], EvalOutcome]:
    """The list of (rule, term) steps together with the outcome."""
    steps: list[tuple[str, S.Expr]] = []
    outcome = iterate(S.desugar(e), fuel, lambda n, rule, t: steps.append((rule, t)))
    return steps, outcome
