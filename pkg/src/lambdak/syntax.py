"""Expression syntax, including the internal forms that only arise during
evaluation (heap bindings, reference names and partial applications).

Every node is a frozen dataclass.  ``span`` fields are excluded from equality
so parsed and hand-built trees compare equal.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Iterator, Union

# Constants.  Integers are their own constant names.
UNIT = "()"
FIX = "fix"
THROW = "throw"
REF = "ref"
DEREF = "!"
ASSIGN = ":="
INC = "inc"
DEC = "dec"
ADD = "add"
IF0 = "if0"

NAMED_CONSTANTS = (UNIT, FIX, THROW, REF, DEREF, ASSIGN, INC, DEC, ADD, IF0)

_span = dict(default=None, compare=False, repr=False)
# Elaboration annotations (types attached by inference); never compared.
_ann = dict(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: object = field(**_span)
    ann: object = field(**_ann)


@dataclass(frozen=True)
class Const:
    value: Union[str, int]
    span: object = field(**_span)
    ann: object = field(**_ann)

    def __post_init__(self):
        if isinstance(self.value, bool):
            raise TypeError("booleans are not constants")
        if isinstance(self.value, str) and self.value not in NAMED_CONSTANTS:
            raise ValueError(f"unknown constant {self.value!r}")


@dataclass(frozen=True)
class Lam:
    param: str
    body: "Expr"
    span: object = field(**_span)
    ann: object = field(**_ann)


@dataclass(frozen=True)
class App:
    fn: "Expr"
    arg: "Expr"
    span: object = field(**_span)


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Expr"
    body: "Expr"
    span: object = field(**_span)
    ann: object = field(**_ann)


@dataclass(frozen=True)
class Bind:
    """``x <- e1; e2``, sugar for ``(\\x. e2) e1``."""
    name: str
    bound: "Expr"
    body: "Expr"
    span: object = field(**_span)


@dataclass(frozen=True)
class Catch:
    body: "Expr"
    handler: "Expr"
    span: object = field(**_span)


@dataclass(frozen=True)
class Run:
    body: "Expr"
    span: object = field(**_span)
    ann: object = field(**_ann)


@dataclass(frozen=True)
class Heap:
    """Ordered bindings from reference names to values."""
    bindings: tuple[tuple[int, "Expr"], ...] = ()

    def __post_init__(self):
        names = [r for r, _ in self.bindings]
        if len(set(names)) != len(names):
            raise ValueError(f"heap binds a reference twice: {names}")

    def dom(self) -> set[int]:
        return {r for r, _ in self.bindings}

    def names(self) -> list[int]:
        return [r for r, _ in self.bindings]

    def get(self, r: int):
        for name, v in self.bindings:
            if name == r:
                return v
        return None

    def set(self, r: int, v: "Expr") -> "Heap":
        return Heap(tuple((name, v if name == r else old) for name, old in self.bindings))

    def __add__(self, other: "Heap") -> "Heap":
        return Heap(self.bindings + other.bindings)

    def __len__(self) -> int:
        return len(self.bindings)

    def __iter__(self) -> Iterator[tuple[int, "Expr"]]:
        return iter(self.bindings)


@dataclass(frozen=True)
class HeapBind:
    heap: Heap
    body: "Expr"
    span: object = field(**_span)
    ann: object = field(**_ann)


@dataclass(frozen=True)
class RefName:
    ref: int
    span: object = field(**_span)


@dataclass(frozen=True)
class PartialCatch:
    """``catch e`` awaiting its handler."""
    body: "Expr"
    span: object = field(**_span)


@dataclass(frozen=True)
class PartialAssign:
    """``(r :=)`` awaiting the value to store."""
    ref: int
    span: object = field(**_span)


@dataclass(frozen=True)
class PartialConst:
    """A curried arithmetic constant that has received some of its arguments."""
    const: str
    captured: tuple["Expr", ...]
    span: object = field(**_span)


Expr = Union[Var, Const, Lam, App, Let, Bind, Catch, Run, HeapBind, RefName,
             PartialCatch, PartialAssign, PartialConst]


def unit() -> Const:
    return Const(UNIT)


def app(f: Expr, *args: Expr) -> Expr:
    for a in args:
        f = App(f, a)
    return f


def throw_unit() -> App:
    return App(Const(THROW), Const(UNIT))


# ---------------------------------------------------------------- classification

def is_value(e: Expr) -> bool:
    return isinstance(e, (Lam, PartialCatch)) or is_basic(e)


def is_basic(e: Expr) -> bool:
    """Basic values contain no arbitrary subexpressions.

    Partially applied arithmetic constants count as basic: their captured
    arguments are values that cannot run.
    """
    if isinstance(e, (Var, Const, RefName, PartialAssign)):
        return True
    if isinstance(e, PartialConst):
        return all(is_value(v) for v in e.captured)
    return False


def is_throw(e: Expr) -> bool:
    """``throw c`` with a constant payload."""
    return (isinstance(e, App) and e.fn == Const(THROW) and isinstance(e.arg, Const))


def is_unit_throw(e: Expr) -> bool:
    return isinstance(e, App) and e.fn == Const(THROW) and e.arg == Const(UNIT)


# ---------------------------------------------------------------- traversals

def children(e: Expr) -> list[Expr]:
    if isinstance(e, (Lam,)):
        return [e.body]
    if isinstance(e, App):
        return [e.fn, e.arg]
    if isinstance(e, (Let, Bind)):
        return [e.bound, e.body]
    if isinstance(e, Catch):
        return [e.body, e.handler]
    if isinstance(e, (Run, PartialCatch)):
        return [e.body]
    if isinstance(e, HeapBind):
        return [v for _, v in e.heap] + [e.body]
    if isinstance(e, PartialConst):
        return list(e.captured)
    return []


def subterms(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from subterms(c)


def size(e: Expr) -> int:
    return sum(1 for _ in subterms(e))


def fv(e: Expr) -> set[str]:
    """Free term variables."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Lam):
        return fv(e.body) - {e.param}
    if isinstance(e, (Let, Bind)):
        return fv(e.bound) | (fv(e.body) - {e.name})
    out: set[str] = set()
    for c in children(e):
        out |= fv(c)
    return out


def frv(e: Expr) -> set[int]:
    """Free reference names; heap binders scope over their values and body."""
    if isinstance(e, (RefName, PartialAssign)):
        return {e.ref}
    if isinstance(e, HeapBind):
        out: set[int] = set()
        for c in children(e):
            out |= frv(c)
        return out - e.heap.dom()
    out = set()
    for c in children(e):
        out |= frv(c)
    return out


def desugar(e: Expr) -> Expr:
    """Replace every Bind by the application it abbreviates."""
    if isinstance(e, Bind):
        return App(Lam(e.name, desugar(e.body), span=e.span), desugar(e.bound), span=e.span)
    return map_children(e, desugar)


def map_children(e: Expr, f) -> Expr:
    if isinstance(e, Lam):
        return replace(e, body=f(e.body))
    if isinstance(e, App):
        return replace(e, fn=f(e.fn), arg=f(e.arg))
    if isinstance(e, (Let, Bind)):
        return replace(e, bound=f(e.bound), body=f(e.body))
    if isinstance(e, Catch):
        return replace(e, body=f(e.body), handler=f(e.handler))
    if isinstance(e, (Run, PartialCatch)):
        return replace(e, body=f(e.body))
    if isinstance(e, HeapBind):
        return replace(e, heap=Heap(tuple((r, f(v)) for r, v in e.heap)), body=f(e.body))
    if isinstance(e, PartialConst):
        return replace(e, captured=tuple(f(v) for v in e.captured))
    return e


def has_internal_forms(e: Expr) -> bool:
    return any(isinstance(s, (HeapBind, RefName, PartialCatch, PartialAssign, PartialConst))
               for s in subterms(e))


# ---------------------------------------------------------------- substitution

def _fresh_name(base: str, avoid: set[str]) -> str:
    stem = base.rstrip("'0123456789") or "x"
    for i in itertools.count(1):
        cand = f"{stem}{i}"
        if cand not in avoid:
            return cand
    raise AssertionError


def subst_var(e: Expr, name: str, value: Expr) -> Expr:
    """Capture-avoiding ``[name := value] e``."""
    return _subst(e, name, value, fv(value))


def _subst(e: Expr, x: str, v: Expr, fv_v: set[str]) -> Expr:
    if isinstance(e, Var):
        return v if e.name == x else e
    if isinstance(e, Lam):
        if e.param == x:
            return e
        if e.param in fv_v and x in fv(e.body):
            new = _fresh_name(e.param, fv_v | fv(e.body) | {x})
            body = _subst(e.body, e.param, Var(new), {new})
            return replace(e, param=new, body=_subst(body, x, v, fv_v))
        return replace(e, body=_subst(e.body, x, v, fv_v))
    if isinstance(e, (Let, Bind)):
        bound = _subst(e.bound, x, v, fv_v)
        if e.name == x:
            return replace(e, bound=bound)
        if e.name in fv_v and x in fv(e.body):
            new = _fresh_name(e.name, fv_v | fv(e.body) | {x})
            body = _subst(e.body, e.name, Var(new), {new})
            return replace(e, name=new, bound=bound, body=_subst(body, x, v, fv_v))
        return replace(e, bound=bound, body=_subst(e.body, x, v, fv_v))
    return map_children(e, lambda c: _subst(c, x, v, fv_v))


def rename_refs(e: Expr, renaming: dict[int, int]) -> Expr:
    """Rename free reference names; binders of nested heaps shadow."""
    if not renaming:
        return e
    if isinstance(e, RefName):
        return replace(e, ref=renaming.get(e.ref, e.ref))
    if isinstance(e, PartialAssign):
        return replace(e, ref=renaming.get(e.ref, e.ref))
    if isinstance(e, HeapBind):
        inner = {k: v for k, v in renaming.items() if k not in e.heap.dom()}
        return map_children(e, lambda c: rename_refs(c, inner))
    return map_children(e, lambda c: rename_refs(c, renaming))


def rename_heap_binders(hb: HeapBind, renaming: dict[int, int]) -> HeapBind:
    """Alpha-rename the binders of one heap binding."""
    heap = Heap(tuple((renaming.get(r, r), rename_refs(v, renaming)) for r, v in hb.heap))
    return replace(hb, heap=heap, body=rename_refs(hb.body, renaming))


def all_refs(e: Expr) -> set[int]:
    """Every reference name mentioned anywhere, bound or free."""
    out = set()
    for s in subterms(e):
        if isinstance(s, (RefName, PartialAssign)):
            out.add(s.ref)
        elif isinstance(s, HeapBind):
            out |= s.heap.dom()
    return out


def canonical(e: Expr) -> Expr:
    """Rename bound references (in traversal order) and bound term variables
    to a canonical sequence, so alpha-equivalent terms become equal."""
    counter = itertools.count(1)
    ref_base = -1_000_000

    def go(e: Expr, vars_: dict[str, str], refs: dict[int, int]) -> Expr:
        if isinstance(e, Var):
            return Var(vars_.get(e.name, e.name))
        if isinstance(e, RefName):
            return RefName(refs.get(e.ref, e.ref))
        if isinstance(e, PartialAssign):
            return PartialAssign(refs.get(e.ref, e.ref))
        if isinstance(e, Lam):
            new = f"_v{next(counter)}"
            return Lam(new, go(e.body, {**vars_, e.param: new}, refs))
        if isinstance(e, (Let, Bind)):
            new = f"_v{next(counter)}"
            return type(e)(new, go(e.bound, vars_, refs), go(e.body, {**vars_, e.name: new}, refs))
        if isinstance(e, HeapBind):
            inner = dict(refs)
            for r, _ in e.heap:
                inner[r] = ref_base - next(counter)
            heap = Heap(tuple((inner[r], go(v, vars_, inner)) for r, v in e.heap))
            return HeapBind(heap, go(e.body, vars_, inner))
        return map_children(e, lambda c: go(c, vars_, refs))

    return go(e, {}, {})


def alpha_eq(e1: Expr, e2: Expr) -> bool:
    return canonical(e1) == canonical(e2)


def heap_binders_distinct(e: Expr) -> bool:
    """Every heap binding binds pairwise-distinct names (checked by Heap itself)
    and no name is bound by two heaps on the same path."""
    def go(e: Expr, bound: frozenset) -> bool:
        if isinstance(e, HeapBind):
            d = e.heap.dom()
            if d & bound:
                return False
            bound = bound | d
        return all(go(c, bound) for c in children(e))
    return go(e, frozenset())
