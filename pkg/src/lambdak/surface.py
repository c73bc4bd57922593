"""Concrete syntax: lexing, parsing and printing of expressions and types.

Expression grammar (loosest first)::

    expr   ::= x <- expr ; expr | assign ; expr | assign
    assign ::= app := app | app
    app    ::= head arg* [tailarg]
    head   ::= catch arg arg | run arg | hp {#r -> v, ...} arg | arg
    arg    ::= !arg | atom
    atom   ::= x | n | () | (!) | (:=) | (expr) | [partial] | #r
    tailarg::= \\x. expr | let x = expr in expr

Lambdas and lets extend as far to the right as possible.  Heaps, reference
names and the bracketed partial applications are only accepted in debug mode.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from . import syntax as S
from .types import (
    ARROW, DIV, EMPTY, EXN, EXTEND, HEAP, INT, ROW, STAR, UNIT, Kind,
    Scheme, Session, TCon, TVar, Type, fn, ftv_list, ref_type, row, st,
)
from .rows import split_row


@dataclass(frozen=True)
class SourceSpan:
    start: int
    end: int
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class ParseError(Exception):
    def __init__(self, message: str, span: SourceSpan | None = None, expected=()):
        self.message = message
        self.span = span
        self.expected = frozenset(expected)
        where = f" at {span}" if span else ""
        exp = f" (expected {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message}{where}{exp}")


# ---------------------------------------------------------------- lexer

@dataclass(frozen=True)
class Token:
    kind: str      # "ident", "int", "sym", "eof"
    text: str
    span: SourceSpan


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<int>-?[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym><-|:=|->|[\\.();!=\[\]{}\#,<>|])
""", re.VERBOSE)

KEYWORDS = {"let", "in", "catch", "run", "hp", "forall"}


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            span = SourceSpan(pos, pos + 1, line, pos - line_start + 1)
            raise ParseError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        if kind != "ws":
            span = SourceSpan(pos, m.end(), line, pos - line_start + 1)
            tokens.append(Token(kind, m.group(), span))
        for i in range(pos, m.end()):
            if text[i] == "\n":
                line, line_start = line + 1, i + 1
        pos = m.end()
    tokens.append(Token("eof", "", SourceSpan(pos, pos, line, pos - line_start + 1)))
    return tokens


class _Stream:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("sym", "ident") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"unexpected {self.describe()}", {repr(text)})
        return self.advance()

    def describe(self) -> str:
        return "end of input" if self.tok.kind == "eof" else repr(self.tok.text)

    def fail(self, message: str, expected=()):
        raise ParseError(message, self.tok.span, expected)


def _join(a: SourceSpan, b: SourceSpan) -> SourceSpan:
    return SourceSpan(a.start, b.end, a.line, a.column)


# ---------------------------------------------------------------- expression parser

_ATOM_START = {"(", "[", "#", "!"}


class _ExprParser:
    def __init__(self, text: str, debug: bool):
        self.s = _Stream(text)
        self.debug = debug

    def parse(self) -> S.Expr:
        e = self.expr()
        if self.s.tok.kind != "eof":
            self.s.fail(f"unexpected {self.s.describe()}", {"end of input", "';'", "':='"})
        return e

    def _starts_arg(self) -> bool:
        t = self.s.tok
        if t.kind == "int":
            return True
        if t.kind == "ident":
            return t.text not in KEYWORDS
        return t.kind == "sym" and t.text in _ATOM_START

    def _starts_tail(self) -> bool:
        return self.s.at("\\") or self.s.at("let")

    def _binder(self) -> Token:
        t = self.s.tok
        if t.kind != "ident" or t.text in KEYWORDS or t.text in S.NAMED_CONSTANTS:
            self.s.fail(f"expected a variable name, found {self.s.describe()}", {"identifier"})
        return self.s.advance()

    def expr(self) -> S.Expr:
        start = self.s.tok.span
        if self.s.tok.kind == "ident" and self.s.peek().text == "<-" and self.s.peek().kind == "sym":
            name = self._binder().text
            self.s.expect("<-")
            bound = self.assign()
            self.s.expect(";")
            body = self.expr()
            return S.Bind(name, bound, body, span=_join(start, self._last()))
        first = self.assign()
        if self.s.at(";"):
            self.s.advance()
            rest = self.expr()
            return S.Bind("_", first, rest, span=_join(start, self._last()))
        return first

    def _last(self) -> SourceSpan:
        return self.s.tokens[max(self.s.i - 1, 0)].span

    def assign(self) -> S.Expr:
        start = self.s.tok.span
        lhs = self.app()
        if self.s.at(":="):
            self.s.advance()
            rhs = self.app()
            sp = _join(start, self._last())
            return S.App(S.App(S.Const(S.ASSIGN, span=sp), lhs, span=sp), rhs, span=sp)
        return lhs

    def app(self) -> S.Expr:
        start = self.s.tok.span
        if self._starts_tail():
            return self.tail()
        f = self.head()
        while True:
            if self._starts_arg():
                arg = self.arg()
            elif self._starts_tail():
                arg = self.tail()
            else:
                return f
            f = self._apply(f, arg, _join(start, self._last()))

    def _apply(self, f: S.Expr, arg: S.Expr, span) -> S.Expr:
        if (not self.debug and f == S.Const(S.THROW) and arg != S.Const(S.UNIT)
                and isinstance(arg, S.Const)):
            raise ParseError("throw only accepts ()", span)
        return S.App(f, arg, span=span)

    def tail(self) -> S.Expr:
        start = self.s.tok.span
        if self.s.at("\\"):
            self.s.advance()
            name = self._binder().text
            self.s.expect(".")
            body = self.expr()
            return S.Lam(name, body, span=_join(start, self._last()))
        self.s.expect("let")
        name = self._binder().text
        self.s.expect("=")
        bound = self.expr()
        self.s.expect("in")
        body = self.expr()
        return S.Let(name, bound, body, span=_join(start, self._last()))

    def head(self) -> S.Expr:
        start = self.s.tok.span
        if self.s.at("catch"):
            self.s.advance()
            body = self.arg()
            handler = self.arg() if self._starts_arg() else self.tail() if self._starts_tail() else None
            if handler is None:
                self.s.fail("catch needs a handler", {"expression"})
            return S.Catch(body, handler, span=_join(start, self._last()))
        if self.s.at("run"):
            self.s.advance()
            return S.Run(self._arg_or_tail(), span=_join(start, self._last()))
        if self.s.at("hp"):
            if not self.debug:
                self.s.fail("heap bindings are only allowed in debug mode")
            self.s.advance()
            heap = self.heap()
            return S.HeapBind(heap, self._arg_or_tail(), span=_join(start, self._last()))
        if not self._starts_arg():
            self.s.fail(f"unexpected {self.s.describe()}", {"expression"})
        return self.arg()

    def _arg_or_tail(self) -> S.Expr:
        if self._starts_tail():
            return self.tail()
        if not self._starts_arg():
            self.s.fail(f"unexpected {self.s.describe()}", {"expression"})
        return self.arg()

    def heap(self) -> S.Heap:
        self.s.expect("{")
        bindings = []
        while not self.s.at("}"):
            r = self.refname()
            self.s.expect("->")
            bindings.append((r, self.assign()))
            if not self.s.at(","):
                break
            self.s.advance()
        self.s.expect("}")
        try:
            return S.Heap(tuple(bindings))
        except ValueError as exc:
            raise ParseError(str(exc), self._last()) from None

    def refname(self) -> int:
        self.s.expect("#")
        t = self.s.tok
        if t.kind != "int" or t.text.startswith("-"):
            self.s.fail("expected a reference number", {"number"})
        self.s.advance()
        return int(t.text)

    def arg(self) -> S.Expr:
        start = self.s.tok.span
        if self.s.at("!"):
            self.s.advance()
            inner = self.arg()
            sp = _join(start, self._last())
            return S.App(S.Const(S.DEREF, span=start), inner, span=sp)
        return self.atom()

    def atom(self) -> S.Expr:
        t = self.s.tok
        if t.kind == "int":
            self.s.advance()
            return S.Const(int(t.text), span=t.span)
        if t.kind == "ident" and t.text not in KEYWORDS:
            self.s.advance()
            if t.text in S.NAMED_CONSTANTS:
                return S.Const(t.text, span=t.span)
            return S.Var(t.text, span=t.span)
        if self.s.at("#"):
            if not self.debug:
                self.s.fail("reference names are only allowed in debug mode")
            r = self.refname()
            return S.RefName(r, span=_join(t.span, self._last()))
        if self.s.at("["):
            if not self.debug:
                self.s.fail("partial applications are only allowed in debug mode")
            return self.partial()
        if self.s.at("("):
            self.s.advance()
            if self.s.at(")"):
                self.s.advance()
                return S.Const(S.UNIT, span=_join(t.span, self._last()))
            for op in (S.DEREF, S.ASSIGN):
                if self.s.at(op) and self.s.peek().text == ")":
                    self.s.advance()
                    self.s.advance()
                    return S.Const(op, span=_join(t.span, self._last()))
            e = self.expr()
            self.s.expect(")")
            return e
        self.s.fail(f"unexpected {self.s.describe()}", {"expression"})

    def partial(self) -> S.Expr:
        start = self.s.expect("[").span
        if self.s.at("catch"):
            self.s.advance()
            body = self.arg()
            out = S.PartialCatch(body)
        elif self.s.at("#"):
            r = self.refname()
            self.s.expect(":=")
            out = S.PartialAssign(r)
        else:
            t = self.s.tok
            if t.text not in (S.ADD, S.IF0):
                self.s.fail("expected a partial application", {"add", "if0", "catch", "#r"})
            self.s.advance()
            captured = []
            while not self.s.at("]"):
                captured.append(self.arg())
            limit = 1 if t.text == S.ADD else 2
            if not 1 <= len(captured) <= limit:
                self.s.fail(f"{t.text} takes 1 to {limit} captured arguments")
            out = S.PartialConst(t.text, tuple(captured))
        self.s.expect("]")
        from dataclasses import replace
        return replace(out, span=_join(start, self._last()))


def parse_expr(text: str, debug: bool = False) -> S.Expr:
    """Parse a program.  ``debug`` enables the internal forms."""
    try:
        return _ExprParser(text, debug).parse()
    except RecursionError:
        raise ParseError("expression nested too deeply") from None


# ---------------------------------------------------------------- expression printer

_SEQ, _ASSIGN, _APP, _ARG = 0, 1, 2, 3


def print_expr(e: S.Expr) -> str:
    """Print ``e`` so that ``parse_expr(print_expr(e), debug=True)`` gives it back."""
    return _pe(e, _SEQ, True)


def _paren(s: str, need: bool) -> str:
    return f"({s})" if need else s


def _pe(e: S.Expr, prec: int, last: bool) -> str:
    # ``last``: nothing follows in the enclosing production, so a lambda may
    # extend to the right without parentheses.
    if isinstance(e, S.Var):
        return e.name
    if isinstance(e, S.Const):
        if e.value in (S.DEREF, S.ASSIGN):
            return f"({e.value})"
        return str(e.value)
    if isinstance(e, S.RefName):
        return f"#{e.ref}"
    if isinstance(e, S.PartialCatch):
        return f"[catch {_pe(e.body, _ARG, False)}]"
    if isinstance(e, S.PartialAssign):
        return f"[#{e.ref} :=]"
    if isinstance(e, S.PartialConst):
        args = " ".join(_pe(v, _ARG, False) for v in e.captured)
        return f"[{e.const} {args}]"
    if isinstance(e, S.App) and e.fn == S.Const(S.DEREF):
        return f"!{_pe(e.arg, _ARG, False)}"

    if isinstance(e, (S.Lam, S.Let)):
        need = not last
    elif isinstance(e, S.Bind):
        need = prec > _SEQ or not last
    elif _is_assign(e):
        need = prec > _ASSIGN
    else:
        need = prec > _APP
    last = last or need

    if isinstance(e, S.Lam):
        text = f"\\{e.param}. {_pe(e.body, _SEQ, True)}"
    elif isinstance(e, S.Let):
        text = f"let {e.name} = {_pe(e.bound, _SEQ, True)} in {_pe(e.body, _SEQ, True)}"
    elif isinstance(e, S.Bind):
        first = _pe(e.bound, _ASSIGN, False)
        lead = f"{first}; " if e.name == "_" else f"{e.name} <- {first}; "
        text = lead + _pe(e.body, _SEQ, True)
    elif _is_assign(e):
        text = f"{_pe(e.fn.arg, _APP, False)} := {_pe(e.arg, _APP, last)}"
    elif isinstance(e, S.App):
        text = f"{_pe(e.fn, _APP, False)} {_pe(e.arg, _ARG, last)}"
    elif isinstance(e, S.Catch):
        text = f"catch {_pe(e.body, _ARG, False)} {_pe(e.handler, _ARG, False)}"
    elif isinstance(e, S.Run):
        text = f"run {_pe(e.body, _ARG, False)}"
    elif isinstance(e, S.HeapBind):
        cells = ", ".join(f"#{r} -> {_pe(v, _ASSIGN, False)}" for r, v in e.heap)
        text = f"hp {{{cells}}} {_pe(e.body, _ARG, False)}"
    else:
        raise TypeError(f"not an expression: {e!r}")
    return _paren(text, need)


def _is_assign(e: S.Expr) -> bool:
    return isinstance(e, S.App) and isinstance(e.fn, S.App) and e.fn.fn == S.Const(S.ASSIGN)


# ---------------------------------------------------------------- types

_LETTERS = "abcdfgijklmnopqrstuvwxyz"  # no e/h so names never collide with rows and heaps


def _star_name(i: int) -> str:
    q, r = divmod(i, len(_LETTERS))
    return _LETTERS[r] + (str(q) if q else "")


class Namer:
    """Assigns canonical display names per kind in first-request order."""

    def __init__(self):
        self.names: dict[TVar, str] = {}
        self.counts = {"*": 0, "e": 0, "h": 0}

    def __call__(self, v: TVar) -> str:
        if v not in self.names:
            k = v.kind.name
            n = self.counts[k]
            self.counts[k] = n + 1
            self.names[v] = _star_name(n) if k == "*" else f"{k}{n + 1}"
        return self.names[v]


def print_type(t, namer: Namer | None = None) -> str:
    """Print a type or scheme with canonical variable names."""
    namer = namer or Namer()
    if isinstance(t, Scheme):
        for v in ftv_list(t.body):
            if v in t.quantified:
                namer(v)
        body = _pt(t.body, namer, False)
        qs = [namer(v) for v in ftv_list(t.body) if v in t.quantified]
        return f"forall {' '.join(qs)}. {body}" if qs else body
    return _pt(t, namer, False)


def print_effect(e: Type, namer: Namer | None = None) -> str:
    return _peff(e, namer or Namer())


def _pt(t: Type, namer: Namer, arg_pos: bool) -> str:
    if isinstance(t, TVar):
        return namer(t)
    if isinstance(t, TCon):
        return t.name
    if t.head == ARROW:
        a, eff, r = t.args
        left = _pt(a, namer, True)
        mid = "" if eff == EMPTY else _peff(eff, namer) + " "
        return _paren(f"{left} -> {mid}{_pt(r, namer, False)}", arg_pos)
    if t.head == EXTEND:
        return _peff(t, namer)
    inner = ",".join(_pt(a, namer, False) for a in t.args)
    return f"{t.head.name}<{inner}>"


def _peff(e: Type, namer: Namer) -> str:
    labels, tail = split_row(e)
    if not labels and tail != EMPTY:
        return _pt(tail, namer, False)
    inner = ",".join(_pt(l, namer, False) for l in labels)
    if tail != EMPTY:
        inner += "|" + _pt(tail, namer, False)
    return f"<{inner}>"


class _TypeParser:
    def __init__(self, text: str, session: Session):
        self.s = _Stream(text)
        self.session = session
        self.vars: dict[str, TVar] = {}

    def var(self, name: str, kind: Kind) -> TVar:
        v = self.vars.get(name)
        if v is None:
            v = self.vars[name] = self.session.fresh(kind)
        elif v.kind != kind:
            self.s.fail(f"{name} used at kinds {v.kind} and {kind}")
        return v

    def ident(self) -> str:
        t = self.s.tok
        if t.kind != "ident":
            self.s.fail(f"unexpected {self.s.describe()}", {"identifier"})
        return self.s.advance().text

    def scheme(self):
        if self.s.at("forall"):
            self.s.advance()
            names = []
            while not self.s.at("."):
                names.append(self.ident())
            self.s.expect(".")
            body = self.type()
            self.end()
            quantified = tuple(self.vars[n] for n in names if n in self.vars)
            order = [v for v in ftv_list(body) if v in quantified]
            return Scheme(tuple(order), body)
        body = self.type()
        self.end()
        return body

    def end(self):
        if self.s.tok.kind != "eof":
            self.s.fail(f"unexpected {self.s.describe()}", {"end of input"})

    def type(self) -> Type:
        left = self.btype()
        if not self.s.at("->"):
            return left
        self.s.advance()
        eff = EMPTY
        if self.s.at("<"):
            eff = self.effect()
        elif self.s.tok.kind == "ident" and self._type_start(self.s.peek()):
            eff = self.var(self.s.advance().text, ROW)
        return fn(left, eff, self.type())

    @staticmethod
    def _type_start(t: Token) -> bool:
        return t.kind == "ident" or (t.kind == "sym" and t.text == "(")

    def btype(self) -> Type:
        if self.s.at("("):
            self.s.advance()
            if self.s.at(")"):
                self.s.advance()
                return UNIT
            t = self.type()
            self.s.expect(")")
            return t
        name = self.ident()
        if name == "int":
            return INT
        if name == "ref":
            self.s.expect("<")
            h = self.heap()
            self.s.expect(",")
            t = self.type()
            self.s.expect(">")
            return ref_type(h, t)
        return self.var(name, STAR)

    def heap(self) -> Type:
        return self.var(self.ident(), HEAP)

    def effect(self) -> Type:
        self.s.expect("<")
        labels = []
        tail: Type = EMPTY
        if not self.s.at(">") and not self.s.at("|"):
            labels.append(self.label())
            while self.s.at(","):
                self.s.advance()
                labels.append(self.label())
        if self.s.at("|"):
            self.s.advance()
            tail = self.var(self.ident(), ROW)
        self.s.expect(">")
        return row(*labels, tail=tail)

    def label(self) -> Type:
        name = self.ident()
        if name == "exn":
            return EXN
        if name == "div":
            return DIV
        if name == "st":
            self.s.expect("<")
            h = self.heap()
            self.s.expect(">")
            return st(h)
        self.s.fail(f"unknown effect label {name}", {"exn", "div", "st"})


def parse_type(text: str, session: Session | None = None):
    """Parse a type, or a scheme when the text starts with ``forall``.

    Variable kinds come from their position: after an arrow, ``<...>`` or an
    identifier followed by another type is the effect; the tail after ``|`` is
    a row; the first argument of ``st`` and ``ref`` is a heap.
    """
    try:
        return _TypeParser(text, session or Session()).scheme()
    except RecursionError:
        raise ParseError("type nested too deeply") from None


def parse_effect(text: str, session: Session | None = None) -> Type:
    p = _TypeParser(text, session or Session())
    if p.s.at("<"):
        eff = p.effect()
    else:
        eff = p.var(p.ident(), ROW)
    p.end()
    return eff
