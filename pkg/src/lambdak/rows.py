"""Effect rows: label comparison, equivalence, membership and tails.

Rows keep duplicate labels.  Two labels with different constructor heads
commute; labels with the same head never swap, so their relative order is
significant.  That makes ``<exn,exn>`` and ``<exn>`` different rows, and
``<st<h1>,st<h2>>`` different from ``<st<h2>,st<h1>>``.
"""
from __future__ import annotations

from .types import (
    EMPTY, LABEL, ROW, TCon, TVar, Type, head_name, is_extend, kind_of, row,
)


def split_row(e: Type) -> tuple[list[Type], Type]:
    """Return the labels of a row in order and its tail (a variable or ``<>``).

    A tail that is neither is returned as-is, which only happens for skolem
    constants introduced by the checker.
    """
    labels = []
    while is_extend(e):
        labels.append(e.args[0])
        e = e.args[1]
    return labels, e


def effect_tail(e: Type) -> Type:
    return split_row(e)[1]


def is_open(e: Type) -> bool:
    return isinstance(effect_tail(e), TVar)


def label_eq(l1: Type, l2: Type) -> bool:
    """Labels are compared on their constructor head only."""
    return head_name(l1) == head_name(l2)


def effect_contains(label: Type, e: Type) -> bool:
    labels, _ = split_row(e)
    return any(label_eq(label, l) for l in labels)


def type_eq(t1: Type, t2: Type) -> bool:
    """Syntactic equality, except that row-kinded positions compare by effect_eq."""
    if isinstance(t1, (TVar, TCon)) or isinstance(t2, (TVar, TCon)):
        if kind_of(t1) == ROW and kind_of(t2) == ROW:
            return effect_eq(t1, t2)
        return t1 == t2
    if t1.head != t2.head:
        return False
    if t1.head.kind.result == ROW:
        return effect_eq(t1, t2)
    return all(type_eq(a, b) for a, b in zip(t1.args, t2.args))


def effect_eq(e1: Type, e2: Type) -> bool:
    """Decide row equivalence generated by reflexivity, transitivity,
    congruence under a head label, and swapping labels with distinct heads.

    Each label of ``e1`` is extracted from ``e2`` at the first occurrence of
    the same head (it can be swapped to the front past labels with different
    heads, never past one with the same head).  The extracted pair must agree
    on their arguments.  Once ``e1`` is exhausted the remainders must be the
    identical tail.
    """
    labels1, tail1 = split_row(e1)
    labels2, tail2 = split_row(e2)
    if len(labels1) != len(labels2):
        return False
    rest = list(labels2)
    for lab in labels1:
        for i, other in enumerate(rest):
            if label_eq(lab, other):
                if not type_eq(lab, other):
                    return False
                del rest[i]
                break
        else:
            return False
    return not rest and tail1 == tail2


def row_labels(e: Type) -> list[Type]:
    return split_row(e)[0]


def remove_label(label: Type, e: Type) -> Type | None:
    """Drop the first label with the same head as ``label``; None if absent."""
    labels, tail = split_row(e)
    for i, l in enumerate(labels):
        if label_eq(label, l):
            return row(*(labels[:i] + labels[i + 1:]), tail=tail)
    return None


def check_row(e: Type) -> None:
    """Assert the row chain invariant: labels of label kind, tail of row kind."""
    labels, tail = split_row(e)
    for l in labels:
        assert kind_of(l) == LABEL, l
    assert kind_of(tail) == ROW and not is_extend(tail), tail
    assert tail == EMPTY or isinstance(tail, (TVar, TCon)), tail

