"""Robinson unification extended with row unification over duplicate labels."""
from __future__ import annotations

import enum

from .rows import effect_tail, label_eq
from .types import (
    EMPTY_SUBST, ROW, Session, Subst, TApp, TCon, TVar, Type, compose, extend,
    ftv_list, is_extend, kind_of, occurs,
)


class Reason(enum.Enum):
    OCCURS_CHECK = "OccursCheck"
    HEAD_MISMATCH = "HeadMismatch"
    KIND_MISMATCH = "KindMismatch"
    MISSING_LABEL = "MissingLabel"
    TAIL_ESCAPE = "TailEscape"


class UnifyFailure(Exception):
    def __init__(self, reason: Reason, left, right):
        self.reason = reason
        self.at = (left, right)
        super().__init__(f"{reason.value}: {left} ~ {right}")


class BudgetExceeded(RuntimeError):
    pass


def _session_for(*types: Type) -> Session:
    ids = [v.id for v in ftv_list(*types)]
    return Session(max(ids, default=0) + 1000)


class Unifier:
    """Carries the fresh-variable supply and counts recursive calls.

    ``max_calls`` turns a runaway unification into ``BudgetExceeded``; it is
    only used by the termination tests.
    """

    def __init__(self, session: Session, max_calls: int | None = None):
        self.session = session
        self.calls = 0
        self.max_calls = max_calls

    def _tick(self):
        self.calls += 1
        if self.max_calls is not None and self.calls > self.max_calls:
            raise BudgetExceeded(f"unification exceeded {self.max_calls} calls")

    def unify(self, t1: Type, t2: Type) -> Subst:
        self._tick()
        if t1 is t2:
            return EMPTY_SUBST
        if kind_of(t1) != kind_of(t2):
            raise UnifyFailure(Reason.KIND_MISMATCH, t1, t2)
        if isinstance(t1, TVar) and t1 == t2:
            return EMPTY_SUBST
        if isinstance(t1, TVar):
            return self._bind(t1, t2)
        if isinstance(t2, TVar):
            return self._bind(t2, t1)
        if is_extend(t1):
            return self._unify_rows(t1, t2)
        if is_extend(t2):
            return self._unify_rows(t2, t1)
        if isinstance(t1, TCon) or isinstance(t2, TCon):
            if t1 == t2:
                return EMPTY_SUBST
            raise UnifyFailure(Reason.HEAD_MISMATCH, t1, t2)
        if t1.head != t2.head:
            raise UnifyFailure(Reason.HEAD_MISMATCH, t1, t2)
        theta = EMPTY_SUBST
        for a, b in zip(t1.args, t2.args):
            s = self.unify(theta.apply(a), theta.apply(b))
            theta = compose(s, theta)
        return theta

    def _bind(self, v: TVar, t: Type) -> Subst:
        if occurs(v, t):
            raise UnifyFailure(Reason.OCCURS_CHECK, v, t)
        # Kinds were compared by the caller.
        return Subst.trusted({v: t})

    def _unify_rows(self, e1: TApp, e2: Type) -> Subst:
        label, rest1 = e1.args
        rest2, theta1 = self.unify_effect(e2, label)
        tail = effect_tail(rest1)
        if isinstance(tail, TVar) and tail in theta1:
            raise UnifyFailure(Reason.TAIL_ESCAPE, e1, e2)
        theta2 = self.unify(theta1.apply(rest1), theta1.apply(rest2))
        return compose(theta2, theta1)

    def unify_effect(self, e: Type, label: Type) -> tuple[Type, Subst]:
        """Find ``label`` in ``e``; return the remaining row and a substitution."""
        self._tick()
        if is_extend(e):
            head, rest = e.args
            if label_eq(label, head):
                return rest, self.unify(label, head)
            rest2, theta = self.unify_effect(rest, label)
            return extend(head, rest2), theta
        if isinstance(e, TVar):
            mu = self.session.fresh(ROW)
            return mu, Subst.single(e, extend(label, mu))
        raise UnifyFailure(Reason.MISSING_LABEL, e, label)


def unify(t1: Type, t2: Type, session: Session | None = None) -> Subst:
    """Most general kind-preserving unifier of ``t1`` and ``t2``.

    Raises UnifyFailure.  Without a session, fresh row variables are numbered
    above every variable occurring in the inputs.
    """
    return Unifier(session or _session_for(t1, t2)).unify(t1, t2)


def unify_effect(e: Type, label: Type, session: Session | None = None) -> tuple[Type, Subst]:
    return Unifier(session or _session_for(e, label)).unify_effect(e, label)


def tail_guard(e1: Type, s: Subst) -> bool:
    """True iff the tail of ``e1`` is outside the domain of ``s``."""
    tail = effect_tail(e1)
    return not (isinstance(tail, TVar) and tail in s)
