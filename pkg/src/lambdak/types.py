"""Kinds, types, schemes and substitutions.

Types are immutable trees.  Type variables carry their kind, so the kind of
any type can be synthesized locally without a kind environment.  Effect rows
are ordinary types of row kind built from ``<>`` and the two-argument row
extension constructor, stored right-nested exactly as written.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Union


class KindError(Exception):
    """A type was built with an arity or kind mismatch."""


@dataclass(frozen=True, eq=False)
class Kind:
    name: str
    params: tuple["Kind", ...] = ()
    result: "Kind | None" = None

    def __post_init__(self):
        if self.name == "->" and (not self.params or self.result is None):
            raise KindError("arrow kind needs at least one parameter and a result")

    def __eq__(self, other):
        return self is other or (
            other.__class__ is Kind and self.name == other.name
            and self.params == other.params and self.result == other.result)

    def __hash__(self):
        return hash((self.name, self.params, self.result))

    @property
    def is_arrow(self) -> bool:
        return self.name == "->"

    def __str__(self) -> str:
        if self.is_arrow:
            ps = ",".join(str(p) for p in self.params)
            return f"({ps}) -> {self.result}"
        return self.name


STAR = Kind("*")
ROW = Kind("e")
LABEL = Kind("k")
HEAP = Kind("h")


def karrow(params: Iterable[Kind], result: Kind) -> Kind:
    return Kind("->", tuple(params), result)


@dataclass(frozen=True, eq=False)
class TVar:
    id: int
    kind: Kind

    def __post_init__(self):
        if self.kind == LABEL:
            raise KindError("type variables of label kind are not allowed")
        if self.kind.is_arrow:
            raise KindError("type variables of constructor kind are not allowed")

    # Hand-written: these are dictionary keys on every hot path.
    def __eq__(self, other):
        return (self is other or other.__class__ is TVar
                and self.id == other.id and self.kind == other.kind)

    def __hash__(self):
        return self.id

    def __str__(self) -> str:
        prefix = {"*": "t", "e": "mu", "h": "xi"}.get(self.kind.name, "v")
        return f"{prefix}{self.id}"


@dataclass(frozen=True)
class TCon:
    name: str
    kind: Kind

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TApp:
    head: TCon
    args: tuple["Type", ...]

    def __post_init__(self):
        k = self.head.kind
        if not k.is_arrow or len(k.params) != len(self.args):
            raise KindError(f"malformed application of {self.head.name}")
        for expected, arg in zip(k.params, self.args):
            if kind_of(arg) != expected:
                raise KindError(
                    f"argument of kind {kind_of(arg)} given to {self.head.name}, "
                    f"expected {expected}")

    @staticmethod
    def trusted(head: TCon, args: tuple) -> "TApp":
        """Build without the kind check; for rebuilding a node whose
        arguments were replaced by kind-preserving substitution."""
        t = object.__new__(TApp)
        object.__setattr__(t, "head", head)
        object.__setattr__(t, "args", args)
        return t

    def __str__(self) -> str:
        return f"{self.head.name}<{', '.join(map(str, self.args))}>"


Type = Union[TVar, TCon, TApp]


UNIT = TCon("()", STAR)
INT = TCon("int", STAR)
ARROW = TCon("->", karrow((STAR, ROW, STAR), STAR))
EMPTY = TCon("<>", ROW)
EXTEND = TCon("<|>", karrow((LABEL, ROW), ROW))
REF = TCon("ref", karrow((HEAP, STAR), STAR))
EXN = TCon("exn", LABEL)
DIV = TCon("div", LABEL)
ST = TCon("st", karrow((HEAP,), LABEL))

BUILTINS = {c.name: c for c in (UNIT, INT, ARROW, EMPTY, EXTEND, REF, EXN, DIV, ST)}


def kind_of(t: Type) -> Kind:
    cls = t.__class__
    if cls is TVar or cls is TCon:
        return t.kind
    if cls is TApp:
        k = t.head.kind
        if not k.is_arrow or len(k.params) != len(t.args):
            raise KindError(f"malformed application of {t.head.name}")
        return k.result
    raise TypeError(f"not a type: {t!r}")


def fn(arg: Type, eff: Type, res: Type) -> TApp:
    return TApp(ARROW, (arg, eff, res))


def extend(label: Type, row: Type) -> TApp:
    return TApp(EXTEND, (label, row))


def row(*labels: Type, tail: Type = EMPTY) -> Type:
    """Build ``<l1,...,ln | tail>`` as a right-nested chain."""
    out = tail
    for lab in reversed(labels):
        out = extend(lab, out)
    return out


def ref_type(heap: Type, t: Type) -> TApp:
    return TApp(REF, (heap, t))


def st(heap: Type) -> TApp:
    return TApp(ST, (heap,))


def is_arrow(t: Type) -> bool:
    return isinstance(t, TApp) and t.head == ARROW


def is_extend(t: Type) -> bool:
    return isinstance(t, TApp) and t.head == EXTEND


def head_name(t: Type) -> str | None:
    """Constructor name of a constant or application, None for variables."""
    if isinstance(t, TCon):
        return t.name
    if isinstance(t, TApp):
        return t.head.name
    return None


@dataclass(frozen=True)
class Scheme:
    quantified: tuple[TVar, ...]
    body: Type

    @staticmethod
    def mono(t: Type) -> "Scheme":
        return Scheme((), t)

    def __str__(self) -> str:
        if not self.quantified:
            return str(self.body)
        return f"forall {' '.join(map(str, self.quantified))}. {self.body}"


class Session:
    """Monotone supply of fresh identifiers for type variables and references.

    One session belongs to one thread at a time.
    """

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)

    def fresh_id(self) -> int:
        return next(self._counter)

    def fresh(self, kind: Kind = STAR) -> TVar:
        return TVar(self.fresh_id(), kind)


def _ftv_type(t: Type, out: dict) -> None:
    if isinstance(t, TVar):
        out.setdefault(t, None)
    elif isinstance(t, TApp):
        for a in t.args:
            _ftv_type(a, out)


def ftv_list(*things) -> list[TVar]:
    """Free type variables in first-occurrence order."""
    out: dict = {}
    for x in things:
        _collect(x, out)
    return list(out)


def _collect(x, out: dict) -> None:
    if isinstance(x, (TVar, TCon, TApp)):
        _ftv_type(x, out)
    elif isinstance(x, Scheme):
        inner: dict = {}
        _ftv_type(x.body, inner)
        for v in inner:
            if v not in x.quantified:
                out.setdefault(v, None)
    elif hasattr(x, "free_type_vars"):
        for v in x.free_type_vars():
            out.setdefault(v, None)
    elif isinstance(x, Mapping):
        for v in x.values():
            _collect(v, out)
    elif isinstance(x, Iterable):
        for v in x:
            _collect(v, out)
    else:
        raise TypeError(f"cannot take free variables of {x!r}")


def ftv(*things) -> set[TVar]:
    return set(ftv_list(*things))


def occurs(v: TVar, t: Type) -> bool:
    if isinstance(t, TVar):
        return t == v
    if isinstance(t, TApp):
        return any(occurs(v, a) for a in t.args)
    return False


@dataclass(frozen=True)
class Subst:
    """Kind-preserving finite map from type variables to types."""

    mapping: Mapping[TVar, Type] = field(default_factory=dict)

    def __post_init__(self):
        for v, t in self.mapping.items():
            if kind_of(t) != v.kind:
                raise KindError(f"substitution maps {v} of kind {v.kind} to a type of kind {kind_of(t)}")

    @staticmethod
    def single(v: TVar, t: Type) -> "Subst":
        return Subst({v: t})

    @staticmethod
    def trusted(mapping: dict) -> "Subst":
        """Skip the kind check for maps built from already checked pieces."""
        s = object.__new__(Subst)
        object.__setattr__(s, "mapping", mapping)
        return s

    def __contains__(self, v) -> bool:
        return v in self.mapping

    def __len__(self) -> int:
        return len(self.mapping)

    def __iter__(self) -> Iterator[TVar]:
        return iter(self.mapping)

    def get(self, v: TVar, default=None):
        return self.mapping.get(v, default)

    def domain(self) -> set[TVar]:
        return set(self.mapping)

    def __call__(self, x):
        return self.apply(x)

    def apply(self, x):
        if not self.mapping:
            return x
        if isinstance(x, (TVar, TCon, TApp)):
            return apply_subst(self, x)
        if isinstance(x, Scheme):
            inner = Subst({v: t for v, t in self.mapping.items() if v not in x.quantified})
            return Scheme(x.quantified, apply_subst(inner, x.body))
        if hasattr(x, "apply_subst"):
            return x.apply_subst(self)
        raise TypeError(f"cannot substitute into {x!r}")

    def compose(self, earlier: "Subst") -> "Subst":
        """``self . earlier``: apply ``earlier`` first, then ``self``."""
        return compose(self, earlier)

    def __str__(self) -> str:
        return "[" + ", ".join(f"{v} := {t}" for v, t in self.mapping.items()) + "]"


EMPTY_SUBST = Subst({})


def apply_subst(s: Subst, t: Type) -> Type:
    cls = t.__class__
    if cls is TVar:
        return s.mapping.get(t, t)
    if cls is TApp:
        old = t.args
        args = tuple([apply_subst(s, a) for a in old])
        for a, b in zip(args, old):
            if a is not b:
                return TApp.trusted(t.head, args)
        return t
    return t


def compose(s2: Subst, s1: Subst) -> Subst:
    """Composition with ``apply(compose(s2, s1), t) == s2(s1(t))``."""
    if not s1.mapping:
        return s2
    if not s2.mapping:
        return s1
    out = {}
    for v, t in s1.mapping.items():
        t2 = apply_subst(s2, t)
        if t2 != v:
            out[v] = t2
    for v, t in s2.mapping.items():
        if v not in s1.mapping:
            out[v] = t
    return Subst.trusted(out)


def compose_all(*substs: Subst) -> Subst:
    """``compose_all(s3, s2, s1)`` applies s1 first."""
    # Fold from the left: later substitutions tend to be small, so this walks
    # each large early one only once.
    out = EMPTY_SUBST
    for s in substs:
        out = compose(out, s)
    return out
