"""Fourier-Motzkin elimination over exact rationals.

Each derived constraint remembers which input atoms it was combined from
(``origin``: input index -> multiplier), so an infeasible system yields a
Farkas certificate for free.  Equality inputs may carry signed multipliers;
inequality inputs only nonnegative ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from ..formula import Atom, LinTerm, VarRef

Coeffs = Dict[VarRef, Fraction]
Origin = Dict[int, Fraction]

_ZERO = Fraction(0)


@dataclass
class Row:
    """``sum(coeffs) + const  kind  0`` with kind in ``<``, ``<=``, ``=``."""

    coeffs: Coeffs
    const: Fraction
    kind: str
    origin: Origin

    def scaled_add(self, k: Fraction, other: "Row", l: Fraction, kind: str) -> "Row":
        coeffs = {v: c * k for v, c in self.coeffs.items()}
        for v, c in other.coeffs.items():
            n = coeffs.get(v, _ZERO) + c * l
            if n:
                coeffs[v] = n
            else:
                coeffs.pop(v, None)
        origin = {i: m * k for i, m in self.origin.items()}
        for i, m in other.origin.items():
            n = origin.get(i, _ZERO) + m * l
            if n:
                origin[i] = n
            else:
                origin.pop(i, None)
        return Row(coeffs, self.const * k + other.const * l, kind, origin)

    def contradictory(self) -> bool:
        if self.coeffs:
            return False
        c = self.const
        if self.kind == "<=":
            return c > 0
        if self.kind == "<":
            return c >= 0
        return c != 0


def rows_of(atoms: Sequence[Atom]) -> List[Row]:
    rows = []
    for i, a in enumerate(atoms):
        if a.rel == "!=":
            raise ValueError("disequalities must be split before elimination")
        rows.append(Row(dict(a.term.coeffs), a.term.const, a.rel, {i: Fraction(1)}))
    return rows


@dataclass
class Conflict:
    """Farkas certificate: ``sum(mult_i * term_i)`` is a constant that
    contradicts the combined relation."""

    origin: Origin
    strict: bool


class _Elim:
    """Stack entry used to rebuild a model after elimination."""

    __slots__ = ("var", "defn", "rows")

    def __init__(self, var: VarRef, defn: Optional[Row] = None, rows: Sequence[Row] = ()):
        self.var = var
        self.defn = defn
        self.rows = list(rows)


def _normalize_key(r: Row):
    items = sorted(r.coeffs.items(), key=lambda p: p[0]._key)
    lead = abs(items[0][1])
    return tuple((v, c / lead) for v, c in items), lead


def _prune(rows: List[Row]) -> List[Row]:
    """Drop duplicate/weaker inequalities with parallel coefficient vectors."""
    best: Dict[tuple, Tuple[Fraction, Row]] = {}
    out: List[Row] = []
    for r in rows:
        if r.kind == "=" or not r.coeffs:
            out.append(r)
            continue
        key, lead = _normalize_key(r)
        c = r.const / lead
        prev = best.get(key)
        if prev is None:
            best[key] = (c, r)
            continue
        pc, pr = prev
        # larger constant is tighter; at equal constants strict is tighter
        if c > pc or (c == pc and r.kind == "<" and pr.kind == "<="):
            best[key] = (c, r)
    out.extend(r for _, r in best.values())
    return out


def _solve_eq(rows: List[Row], v: VarRef, eq: Row, stack: List[_Elim]) -> List[Row]:
    a = eq.coeffs[v]
    out = []
    for r in rows:
        if r is eq:
            continue
        b = r.coeffs.get(v)
        if b is None:
            out.append(r)
        else:
            out.append(r.scaled_add(Fraction(1), eq, -b / a, r.kind))
    stack.append(_Elim(v, defn=eq))
    return out


def _fm_step(rows: List[Row], v: VarRef, stack: List[_Elim]) -> List[Row]:
    pos, neg, rest = [], [], []
    for r in rows:
        c = r.coeffs.get(v)
        if c is None:
            rest.append(r)
        elif c > 0:
            pos.append(r)
        else:
            neg.append(r)
    for p in pos:
        a = p.coeffs[v]
        for n in neg:
            b = n.coeffs[v]
            kind = "<" if (p.kind == "<" or n.kind == "<") else "<="
            rest.append(p.scaled_add(-b, n, a, kind))
    stack.append(_Elim(v, rows=pos + neg))
    return rest


def _pick_var(rows: List[Row], allowed) -> Optional[VarRef]:
    counts: Dict[VarRef, List[int]] = {}
    for r in rows:
        for v, c in r.coeffs.items():
            if allowed is not None and v not in allowed:
                continue
            pc = counts.setdefault(v, [0, 0])
            pc[0 if c > 0 else 1] += 1
    if not counts:
        return None
    return min(counts, key=lambda v: (counts[v][0] * counts[v][1] - counts[v][0] - counts[v][1], v._key))


def eliminate(rows: List[Row], allowed=None, stack: Optional[List[_Elim]] = None):
    """Eliminate variables (all, or those in ``allowed``).

    Returns ``(remaining_rows, conflict)``; ``conflict`` is set as soon as a
    contradictory constant row appears.
    """
    if stack is None:
        stack = []
    rows = list(rows)
    while True:
        for r in rows:
            if r.contradictory():
                return rows, _conflict(r)
        rows = [r for r in rows if r.coeffs]
        eq = None
        for r in rows:
            if r.kind == "=":
                cands = [v for v in r.coeffs if allowed is None or v in allowed]
                if cands:
                    eq = (r, min(cands, key=lambda v: v._key))
                    break
        if eq is not None:
            rows = _solve_eq(rows, eq[1], eq[0], stack)
            continue
        v = _pick_var(rows, allowed)
        if v is None:
            return _prune(rows), None
        rows = _prune(_fm_step(rows, v, stack))


def _conflict(r: Row) -> Conflict:
    origin = dict(r.origin)
    strict = r.kind == "<"
    if r.kind == "=" and r.const < 0:
        origin = {i: -m for i, m in origin.items()}
    return Conflict(origin, strict)


def feasible(atoms: Sequence[Atom]):
    """Decide a conjunction of atoms.

    Returns ``(True, model)`` or ``(False, Conflict)``.  The model covers
    every variable occurring in ``atoms``.
    """
    stack: List[_Elim] = []
    rows, conflict = eliminate(rows_of(atoms), None, stack)
    if conflict is not None:
        return False, conflict
    model: Dict[VarRef, Fraction] = {}
    for e in reversed(stack):
        model[e.var] = _choose(e, model)
    for a in atoms:
        for v in a.term.vars():
            model.setdefault(v, _ZERO)
    return True, model


def _eval_rest(r: Row, skip: VarRef, model: Mapping[VarRef, Fraction]) -> Fraction:
    total = r.const
    for v, c in r.coeffs.items():
        if v != skip:
            total += c * model.get(v, _ZERO)
    return total


def _choose(e: _Elim, model: Mapping[VarRef, Fraction]) -> Fraction:
    v = e.var
    if e.defn is not None:
        a = e.defn.coeffs[v]
        return -_eval_rest(e.defn, v, model) / a
    lo: Optional[Fraction] = None
    lo_strict = False
    hi: Optional[Fraction] = None
    hi_strict = False
    for r in e.rows:
        a = r.coeffs[v]
        bound = -_eval_rest(r, v, model) / a
        strict = r.kind == "<"
        if a > 0:
            if hi is None or bound < hi or (bound == hi and strict):
                hi, hi_strict = bound, strict
        else:
            if lo is None or bound > lo or (bound == lo and strict):
                lo, lo_strict = bound, strict
    return pick_in_interval(lo, lo_strict, hi, hi_strict)


def pick_in_interval(lo, lo_strict, hi, hi_strict) -> Fraction:
    """Value in the interval, preferring 0, then the integer closest to 0,
    then the midpoint."""

    def ok(x):
        if lo is not None and (x < lo or (lo_strict and x == lo)):
            return False
        if hi is not None and (x > hi or (hi_strict and x == hi)):
            return False
        return True

    if ok(_ZERO):
        return _ZERO
    if lo is not None and lo >= 0:
        cand = Fraction(math.floor(lo) + 1) if (lo.denominator == 1 and lo_strict) else Fraction(math.ceil(lo))
        if ok(cand):
            return cand
    if hi is not None and hi <= 0:
        cand = Fraction(math.ceil(hi) - 1) if (hi.denominator == 1 and hi_strict) else Fraction(math.floor(hi))
        if ok(cand):
            return cand
    if lo is not None and hi is not None:
        return (lo + hi) / 2
    if lo is not None:
        return lo + 1
    return hi - 1


def project(atoms: Sequence[Atom], vars: Iterable[VarRef]):
    """Project the conjunction onto the complement of ``vars``.

    Returns a list of remaining rows, or ``None`` when infeasible.
    """
    rows, conflict = eliminate(rows_of(atoms), frozenset(vars))
    if conflict is not None:
        return None
    return rows


def row_atom(r: Row):
    from ..formula import atom

    return atom(LinTerm(r.coeffs, r.const), r.kind)


def combine(atoms: Sequence[Atom], origin: Mapping[int, Fraction]) -> LinTerm:
    out = LinTerm.constant(0)
    for i, m in origin.items():
        out = out + atoms[i].term.scale(m)
    return out


def check_conflict(atoms: Sequence[Atom], c: Conflict) -> bool:
    """Exact re-check of a Farkas certificate."""
    for i, m in c.origin.items():
        if atoms[i].rel != "=" and m < 0:
            return False
    total = combine(atoms, c.origin)
    if not total.is_const():
        return False
    strict = any(m > 0 and atoms[i].rel == "<" for i, m in c.origin.items())
    if strict != c.strict:
        return False
    if strict:
        return total.const >= 0
    return total.const > 0
