"""Linear-arithmetic formulas over named variables.

Variables carry a *tag* telling which copy of a base name they denote:
``"plain"`` (current value ``x``), ``"primed"`` (next value ``x'``) or an
integer step index ``i`` (``x@i``, used in path formulas).

Every formula object is immutable and hashable.  Atoms are always kept in
canonical form, so structural equality is a cheap (and sound) proxy for
syntactic identity modulo scaling.
"""

from __future__ import annotations

import itertools
import math
import re
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

PLAIN = "plain"
PRIMED = "primed"
RAT = "rat"
INT = "int"

Tag = Union[str, int]
Number = Union[int, Fraction]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class FormulaError(Exception):
    """Malformed formula or illegal operation on one."""


class EvalError(FormulaError):
    """Evaluation needs a variable the valuation does not define."""


class BudgetExceeded(FormulaError):
    """A normal-form conversion exceeded its cube/clause budget."""


def _tag_rank(tag: Tag) -> Tuple[int, int]:
    if tag == PLAIN:
        return (0, 0)
    if tag == PRIMED:
        return (1, 0)
    return (2, tag)


class VarRef:
    """A variable: base name, copy tag and sort."""

    __slots__ = ("base", "tag", "sort", "_key", "_hash")

    def __init__(self, base: str, tag: Tag = PLAIN, sort: str = RAT):
        if not base or "'" in base or "@" in base:
            raise FormulaError(f"illegal variable name {base!r}")
        if not (tag in (PLAIN, PRIMED) or (isinstance(tag, int) and tag >= 0)):
            raise FormulaError(f"illegal variable tag {tag!r}")
        if sort not in (RAT, INT):
            raise FormulaError(f"unknown sort {sort!r}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "sort", sort)
        key = (base, _tag_rank(tag), sort)
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __setattr__(self, name, value):
        raise AttributeError("VarRef is immutable")

    def __eq__(self, other):
        return isinstance(other, VarRef) and self._key == other._key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self._key < other._key

    def __reduce__(self):
        return (VarRef, (self.base, self.tag, self.sort))

    def with_tag(self, tag: Tag) -> "VarRef":
        return VarRef(self.base, tag, self.sort)

    @property
    def name(self) -> str:
        if self.tag == PLAIN:
            return self.base
        if self.tag == PRIMED:
            return self.base + "'"
        return f"{self.base}@{self.tag}"

    def __repr__(self):
        return self.name


def var(name: str, sort: str = RAT) -> VarRef:
    """Build a variable from its printed name: ``x``, ``x'`` or ``x@3``."""
    if name.endswith("'"):
        return VarRef(name[:-1], PRIMED, sort)
    if "@" in name:
        base, _, idx = name.rpartition("@")
        return VarRef(base, int(idx), sort)
    return VarRef(name, PLAIN, sort)


# ---------------------------------------------------------------------------
# Linear terms


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


class LinTerm:
    """``sum(c_v * v) + constant`` with exact rational coefficients."""

    __slots__ = ("coeffs", "const", "_hash")

    def __init__(self, coeffs: Mapping[VarRef, Number] | Iterable = (), const: Number = 0):
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        acc: Dict[VarRef, Fraction] = {}
        for v, c in items:
            c = _frac(c)
            if c:
                acc[v] = acc.get(v, Fraction(0)) + c
        object.__setattr__(
            self, "coeffs", tuple(sorted(((v, c) for v, c in acc.items() if c), key=lambda p: p[0]._key))
        )
        object.__setattr__(self, "const", _frac(const))
        object.__setattr__(self, "_hash", hash((self.coeffs, self.const)))

    def __setattr__(self, name, value):
        raise AttributeError("LinTerm is immutable")

    def __eq__(self, other):
        return isinstance(other, LinTerm) and self.coeffs == other.coeffs and self.const == other.const

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (LinTerm, (self.coeffs, self.const))

    @staticmethod
    def of_var(v: VarRef, c: Number = 1) -> "LinTerm":
        return LinTerm(((v, c),))

    @staticmethod
    def constant(c: Number) -> "LinTerm":
        return LinTerm((), c)

    def as_dict(self) -> Dict[VarRef, Fraction]:
        return dict(self.coeffs)

    def vars(self) -> Tuple[VarRef, ...]:
        return tuple(v for v, _ in self.coeffs)

    def coeff(self, v: VarRef) -> Fraction:
        for w, c in self.coeffs:
            if w == v:
                return c
        return Fraction(0)

    def is_const(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "LinTerm") -> "LinTerm":
        return LinTerm(itertools.chain(self.coeffs, other.coeffs), self.const + other.const)

    def __neg__(self) -> "LinTerm":
        return LinTerm(((v, -c) for v, c in self.coeffs), -self.const)

    def __sub__(self, other: "LinTerm") -> "LinTerm":
        return self + (-other)

    def scale(self, k: Number) -> "LinTerm":
        k = _frac(k)
        return LinTerm(((v, c * k) for v, c in self.coeffs), self.const * k)

    def rename(self, mapping: Mapping[VarRef, VarRef]) -> "LinTerm":
        return LinTerm(((mapping.get(v, v), c) for v, c in self.coeffs), self.const)

    def substitute(self, mapping: Mapping[VarRef, "LinTerm"]) -> "LinTerm":
        out = LinTerm((), self.const)
        rest = []
        for v, c in self.coeffs:
            if v in mapping:
                out = out + mapping[v].scale(c)
            else:
                rest.append((v, c))
        return out + LinTerm(rest)

    def evaluate(self, nu: Mapping[VarRef, Fraction]) -> Fraction:
        total = self.const
        for v, c in self.coeffs:
            try:
                total += c * nu[v]
            except KeyError:
                raise EvalError(f"valuation does not define {v.name}") from None
        return total

    def __repr__(self):
        return _term_infix(self)


# ---------------------------------------------------------------------------
# Formula tree


class Formula:
    """Base class of all formula nodes."""

    __slots__ = ()

    def __and__(self, other):
        return conj(self, other)

    def __or__(self, other):
        return disj(self, other)

    def __invert__(self):
        return neg(self)

    def __repr__(self):
        return to_sexpr(self)


class Const(Formula):
    __slots__ = ("value",)

    def __init__(self, value: bool):
        object.__setattr__(self, "value", bool(value))

    def __setattr__(self, name, value):
        raise AttributeError("formulas are immutable")

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    def __hash__(self):
        return hash(self.value)

    def __reduce__(self):
        return (Const, (self.value,))


TRUE = Const(True)
FALSE = Const(False)

RELS = ("<", "<=", "=", "!=")


class Atom(Formula):
    """``term rel 0`` with ``rel`` one of ``<``, ``<=``, ``=``, ``!=``.

    Always canonical; use :func:`atom` to build one, which folds constant
    atoms to TRUE/FALSE.
    """

    __slots__ = ("term", "rel", "_hash")

    def __init__(self, term: LinTerm, rel: str):
        if rel not in RELS:
            raise FormulaError(f"unknown relation {rel!r}")
        term = _canonical_term(term, rel)
        object.__setattr__(self, "term", term)
        object.__setattr__(self, "rel", rel)
        object.__setattr__(self, "_hash", hash(("atom", term, rel)))

    def __setattr__(self, name, value):
        raise AttributeError("formulas are immutable")

    def __eq__(self, other):
        return isinstance(other, Atom) and self.rel == other.rel and self.term == other.term

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (Atom, (self.term, self.rel))


class _NAry(Formula):
    __slots__ = ("args", "_hash")
    _kind = ""

    def __init__(self, args: Sequence[Formula]):
        args = tuple(args)
        if not args:
            raise FormulaError(f"empty {self._kind}")
        object.__setattr__(self, "args", args)
        object.__setattr__(self, "_hash", hash((self._kind, args)))

    def __setattr__(self, name, value):
        raise AttributeError("formulas are immutable")

    def __eq__(self, other):
        return type(other) is type(self) and self._hash == other._hash and self.args == other.args

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (type(self), (self.args,))


class And(_NAry):
    __slots__ = ()
    _kind = "and"


class Or(_NAry):
    __slots__ = ()
    _kind = "or"


class Not(Formula):
    __slots__ = ("arg", "_hash")

    def __init__(self, arg: Formula):
        object.__setattr__(self, "arg", arg)
        object.__setattr__(self, "_hash", hash(("not", arg)))

    def __setattr__(self, name, value):
        raise AttributeError("formulas are immutable")

    def __eq__(self, other):
        return isinstance(other, Not) and self.arg == other.arg

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (Not, (self.arg,))


class _Quant(Formula):
    __slots__ = ("vars", "body", "_hash")
    _kind = ""

    def __init__(self, vars: Iterable[VarRef], body: Formula):
        vs = tuple(sorted(set(vars)))
        object.__setattr__(self, "vars", vs)
        object.__setattr__(self, "body", body)
        object.__setattr__(self, "_hash", hash((self._kind, vs, body)))

    def __setattr__(self, name, value):
        raise AttributeError("formulas are immutable")

    def __eq__(self, other):
        return type(other) is type(self) and self.vars == other.vars and self.body == other.body

    def __hash__(self):
        return self._hash

    def __reduce__(self):
        return (type(self), (self.vars, self.body))


class Exists(_Quant):
    __slots__ = ()
    _kind = "exists"


class Forall(_Quant):
    __slots__ = ()
    _kind = "forall"


# ---------------------------------------------------------------------------
# Canonical atoms and smart constructors


def _canonical_term(term: LinTerm, rel: str) -> LinTerm:
    if not term.coeffs:
        return term
    nums = [c for _, c in term.coeffs] + [term.const]
    den = 1
    for c in nums:
        den = den * c.denominator // math.gcd(den, c.denominator)
    ints = [int(c * den) for c in nums]
    g = 0
    for i in ints:
        g = math.gcd(g, i)
    scale = Fraction(den, g)
    if rel in ("=", "!=") and term.coeffs[0][1] < 0:
        scale = -scale
    if scale == 1:
        return term
    return term.scale(scale)


def atom(term: LinTerm, rel: str) -> Formula:
    """Canonical atom ``term rel 0``; constant atoms fold to TRUE/FALSE."""
    if term.is_const():
        c = term.const
        return TRUE if {"<": c < 0, "<=": c <= 0, "=": c == 0, "!=": c != 0}[rel] else FALSE
    return Atom(term, rel)


def lt(a: LinTerm, b: LinTerm) -> Formula:
    return atom(a - b, "<")


def le(a: LinTerm, b: LinTerm) -> Formula:
    return atom(a - b, "<=")


def eq(a: LinTerm, b: LinTerm) -> Formula:
    return atom(a - b, "=")


def ne(a: LinTerm, b: LinTerm) -> Formula:
    return atom(a - b, "!=")


def _flatten(kind, fs: Iterable[Formula]) -> List[Formula]:
    out: List[Formula] = []
    seen = set()
    for f in fs:
        parts = f.args if isinstance(f, kind) else (f,)
        for p in parts:
            if p not in seen:
                seen.add(p)
                out.append(p)
    return out


def conj(*fs: Formula) -> Formula:
    if len(fs) == 1 and not isinstance(fs[0], Formula):
        fs = tuple(fs[0])
    parts = []
    for f in _flatten(And, fs):
        if f == FALSE:
            return FALSE
        if f != TRUE:
            parts.append(f)
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return And(parts)


def disj(*fs: Formula) -> Formula:
    if len(fs) == 1 and not isinstance(fs[0], Formula):
        fs = tuple(fs[0])
    parts = []
    for f in _flatten(Or, fs):
        if f == TRUE:
            return TRUE
        if f != FALSE:
            parts.append(f)
    if not parts:
        return FALSE
    if len(parts) == 1:
        return parts[0]
    return Or(parts)


def neg(f: Formula) -> Formula:
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def implies(a: Formula, b: Formula) -> Formula:
    return disj(neg(a), b)


def exists(vs: Iterable[VarRef], body: Formula) -> Formula:
    vs = set(vs) & free_vars(body)
    if not vs:
        return body
    if isinstance(body, Exists):
        return Exists(vs | set(body.vars), body.body)
    return Exists(vs, body)


def forall(vs: Iterable[VarRef], body: Formula) -> Formula:
    vs = set(vs) & free_vars(body)
    if not vs:
        return body
    if isinstance(body, Forall):
        return Forall(vs | set(body.vars), body.body)
    return Forall(vs, body)


# ---------------------------------------------------------------------------
# Structural operations


def canonicalize(f: Formula) -> Formula:
    """Equivalent formula with canonical atoms, no double negation and
    constants folded."""
    if isinstance(f, (Const, Atom)):
        return f
    if isinstance(f, Not):
        a = canonicalize(f.arg)
        if isinstance(a, Atom):
            return Not(a)
        return neg(a)
    if isinstance(f, And):
        return conj([canonicalize(a) for a in f.args])
    if isinstance(f, Or):
        return disj([canonicalize(a) for a in f.args])
    if isinstance(f, Exists):
        return exists(f.vars, canonicalize(f.body))
    if isinstance(f, Forall):
        return forall(f.vars, canonicalize(f.body))
    raise FormulaError(f"not a formula: {f!r}")


_FV_CACHE: Dict[Formula, frozenset] = {}


def free_vars(f: Formula) -> frozenset:
    """Variables with a free occurrence in ``f``."""
    if isinstance(f, Const):
        return frozenset()
    if isinstance(f, Atom):
        return frozenset(f.term.vars())
    hit = _FV_CACHE.get(f)
    if hit is not None:
        return hit
    if isinstance(f, Not):
        out = free_vars(f.arg)
    elif isinstance(f, _NAry):
        out = frozenset().union(*(free_vars(a) for a in f.args))
    elif isinstance(f, _Quant):
        out = free_vars(f.body) - set(f.vars)
    else:
        raise FormulaError(f"not a formula: {f!r}")
    if len(_FV_CACHE) > 200_000:
        _FV_CACHE.clear()
    _FV_CACHE[f] = out
    return out


def all_vars(f: Formula) -> frozenset:
    """Free and bound variables of ``f``."""
    if isinstance(f, Const):
        return frozenset()
    if isinstance(f, Atom):
        return frozenset(f.term.vars())
    if isinstance(f, Not):
        return all_vars(f.arg)
    if isinstance(f, _NAry):
        return frozenset().union(*(all_vars(a) for a in f.args))
    return all_vars(f.body) | set(f.vars)


def map_atoms(f: Formula, fn) -> Formula:
    """Rebuild ``f`` with every atom replaced by ``fn(atom)`` (quantifier-free only)."""
    if isinstance(f, Const):
        return f
    if isinstance(f, Atom):
        return fn(f)
    if isinstance(f, Not):
        return neg(map_atoms(f.arg, fn))
    if isinstance(f, And):
        return conj([map_atoms(a, fn) for a in f.args])
    if isinstance(f, Or):
        return disj([map_atoms(a, fn) for a in f.args])
    raise FormulaError("map_atoms needs a quantifier-free formula")


_fresh_counter = itertools.count()


def fresh_like(v: VarRef) -> VarRef:
    # '#' never occurs in parsed identifiers, so these cannot clash
    return VarRef(f"{v.base}#{next(_fresh_counter)}", v.tag, v.sort)


def rename_vars(f: Formula, mapping: Mapping[VarRef, VarRef]) -> Formula:
    """Capture-avoiding renaming of free variables."""
    if not mapping:
        return f
    if isinstance(f, Const):
        return f
    if isinstance(f, Atom):
        if not any(v in mapping for v in f.term.vars()):
            return f
        return atom(f.term.rename(mapping), f.rel)
    if isinstance(f, Not):
        return neg(rename_vars(f.arg, mapping))
    if isinstance(f, And):
        return conj([rename_vars(a, mapping) for a in f.args])
    if isinstance(f, Or):
        return disj([rename_vars(a, mapping) for a in f.args])
    if isinstance(f, _Quant):
        inner = {k: v for k, v in mapping.items() if k not in f.vars}
        targets = set(inner.values())
        bound = {}
        for b in f.vars:
            if b in targets:
                bound[b] = fresh_like(b)
        body = rename_vars(f.body, {**bound, **inner}) if bound else rename_vars(f.body, inner)
        vs = [bound.get(b, b) for b in f.vars]
        return type(f)(vs, body)
    raise FormulaError(f"not a formula: {f!r}")


def substitute(f: Formula, mapping: Mapping[VarRef, LinTerm]) -> Formula:
    """Replace free variables by linear terms (quantifier-free only)."""
    return map_atoms(f, lambda a: atom(a.term.substitute(mapping), a.rel))


def rename(f: Formula, scheme: Mapping[Tag, Tag]) -> Formula:
    """Rename free variables by tag, e.g. ``{PLAIN: 0, PRIMED: 1}``.

    The scheme must be injective; a renamed variable may not collide with a
    free variable whose tag the scheme leaves alone.
    """
    targets = list(scheme.values())
    if len(set(targets)) != len(targets):
        raise FormulaError(f"renaming scheme is not injective: {dict(scheme)!r}")
    fv = free_vars(f)
    mapping = {v: v.with_tag(scheme[v.tag]) for v in fv if v.tag in scheme}
    untouched = {v for v in fv if v.tag not in scheme}
    clash = untouched & set(mapping.values())
    if clash:
        raise FormulaError("renaming collides with " + ", ".join(sorted(v.name for v in clash)))
    return rename_vars(f, mapping)


def shift(f: Formula, offset: int) -> Formula:
    """Add ``offset`` to every step index in ``f``."""
    fv = free_vars(f)
    mapping = {v: v.with_tag(v.tag + offset) for v in fv if isinstance(v.tag, int)}
    if any(t.tag < 0 for t in mapping.values()):
        raise FormulaError("negative step index")
    return rename_vars(f, mapping)


def negate_atom(a: Atom) -> Formula:
    t = a.term
    if a.rel == "<":
        return atom(-t, "<=")
    if a.rel == "<=":
        return atom(-t, "<")
    if a.rel == "=":
        return atom(t, "!=")
    return atom(t, "=")


def split_neq(a: Atom) -> Formula:
    """``t != 0`` becomes ``t < 0 or -t < 0``; other atoms unchanged."""
    if a.rel != "!=":
        return a
    return disj(atom(a.term, "<"), atom(-a.term, "<"))


def nnf(f: Formula, split: bool = False) -> Formula:
    """Negation normal form.  With ``split`` every ``!=`` is also expanded."""
    return _nnf(f, False, split)


def _nnf(f: Formula, negated: bool, split: bool) -> Formula:
    if isinstance(f, Const):
        return neg(f) if negated else f
    if isinstance(f, Atom):
        a = negate_atom(f) if negated else f
        if split and isinstance(a, Atom):
            return split_neq(a)
        return a
    if isinstance(f, Not):
        return _nnf(f.arg, not negated, split)
    if isinstance(f, And):
        parts = [_nnf(a, negated, split) for a in f.args]
        return disj(parts) if negated else conj(parts)
    if isinstance(f, Or):
        parts = [_nnf(a, negated, split) for a in f.args]
        return conj(parts) if negated else disj(parts)
    if isinstance(f, Exists):
        body = _nnf(f.body, negated, split)
        return forall(f.vars, body) if negated else exists(f.vars, body)
    if isinstance(f, Forall):
        body = _nnf(f.body, negated, split)
        return exists(f.vars, body) if negated else forall(f.vars, body)
    raise FormulaError(f"not a formula: {f!r}")


def is_quantifier_free(f: Formula) -> bool:
    if isinstance(f, (Const, Atom)):
        return True
    if isinstance(f, Not):
        return is_quantifier_free(f.arg)
    if isinstance(f, _NAry):
        return all(is_quantifier_free(a) for a in f.args)
    return False


def atoms_of(f: Formula) -> List[Atom]:
    out: List[Atom] = []
    seen = set()

    def walk(g):
        if isinstance(g, Atom):
            if g not in seen:
                seen.add(g)
                out.append(g)
        elif isinstance(g, Not):
            walk(g.arg)
        elif isinstance(g, _NAry):
            for a in g.args:
                walk(a)
        elif isinstance(g, _Quant):
            walk(g.body)

    walk(f)
    return out


def dnf_cubes(f: Formula, budget: Optional[int] = None) -> Iterator[Tuple[Atom, ...]]:
    """Lazily yield the cubes of a DNF of ``f`` (left-to-right distribution).

    ``f`` must be quantifier-free; ``!=`` atoms are split.  An unsatisfiable
    constant yields no cubes; TRUE yields the empty cube.
    """
    if not is_quantifier_free(f):
        raise FormulaError("dnf_cubes needs a quantifier-free formula")
    g = nnf(f, split=True)
    count = 0
    for cube in _cubes(g):
        count += 1
        if budget is not None and count > budget:
            raise BudgetExceeded(f"more than {budget} cubes")
        yield cube


def _cubes(f: Formula) -> Iterator[Tuple[Atom, ...]]:
    if f == TRUE:
        yield ()
    elif f == FALSE:
        return
    elif isinstance(f, Atom):
        yield (f,)
    elif isinstance(f, Or):
        for a in f.args:
            yield from _cubes(a)
    elif isinstance(f, And):
        yield from _product(f.args)
    else:
        raise FormulaError(f"unexpected node in NNF: {f!r}")


def _product(args: Sequence[Formula]) -> Iterator[Tuple[Atom, ...]]:
    if not args:
        yield ()
        return
    for head in _cubes(args[0]):
        for tail in _product(args[1:]):
            yield head + tail


def cnf_clauses(f: Formula, budget: int = 1000) -> List[Formula]:
    """Clauses of a CNF of quantifier-free ``f`` (by distribution).

    Raises :class:`BudgetExceeded` beyond ``budget`` clauses.
    """
    g = nnf(f)
    clauses = _clauses(g, budget)
    out = []
    seen = set()
    for c in clauses:
        c = disj(c)
        if c == TRUE or c in seen:
            continue
        seen.add(c)
        out.append(c)
    return out


def _clauses(f: Formula, budget: int) -> List[Tuple[Formula, ...]]:
    if f == TRUE:
        return []
    if f == FALSE:
        return [()]
    if isinstance(f, Atom):
        return [(f,)]
    if isinstance(f, And):
        out = []
        for a in f.args:
            out.extend(_clauses(a, budget))
            if len(out) > budget:
                raise BudgetExceeded(f"more than {budget} clauses")
        return out
    if isinstance(f, Or):
        acc: List[Tuple[Formula, ...]] = [()]
        for a in f.args:
            sub = _clauses(a, budget)
            acc = [x + y for x in acc for y in sub]
            if len(acc) > budget:
                raise BudgetExceeded(f"more than {budget} clauses")
        return acc
    raise FormulaError(f"unexpected node in NNF: {f!r}")


# ---------------------------------------------------------------------------
# Evaluation


def evaluate(f: Formula, nu: Mapping[VarRef, Fraction]) -> bool:
    """Truth value of quantifier-free ``f`` under valuation ``nu``."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        x = f.term.evaluate(nu)
        r = f.rel
        if r == "<":
            return x < 0
        if r == "<=":
            return x <= 0
        if r == "=":
            return x == 0
        return x != 0
    if isinstance(f, Not):
        return not evaluate(f.arg, nu)
    if isinstance(f, And):
        return all(evaluate(a, nu) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, nu) for a in f.args)
    raise FormulaError("cannot evaluate a quantified formula")


def merge_valuations(pre: Mapping[str, Fraction], post: Mapping[str, Fraction], sorts=None) -> Dict[VarRef, Fraction]:
    """Valuation of plain and primed copies from two name->value maps."""
    sorts = sorts or {}
    out = {}
    for k, val in pre.items():
        out[VarRef(k, PLAIN, sorts.get(k, RAT))] = _frac(val)
    for k, val in post.items():
        out[VarRef(k, PRIMED, sorts.get(k, RAT))] = _frac(val)
    return out


# ---------------------------------------------------------------------------
# Printing


def _num(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _sx_num(c: Fraction) -> str:
    if c < 0:
        return f"(- {_sx_num(-c)})"
    if c.denominator == 1:
        return str(c.numerator)
    return f"(/ {c.numerator} {c.denominator})"


def _sx_side(parts: List[Tuple[VarRef, Fraction]], const: Fraction, qv) -> str:
    items = []
    for v, c in parts:
        items.append(qv(v) if c == 1 else f"(* {_sx_num(c)} {qv(v)})")
    if const or not items:
        items.append(_sx_num(const))
    if len(items) == 1:
        return items[0]
    return "(+ " + " ".join(items) + ")"


def _plain_name(v: VarRef) -> str:
    return v.name


def _quoted_name(v: VarRef) -> str:
    return "|" + v.name + "|"


def to_sexpr(f: Formula, quote: bool = False) -> str:
    """Textual s-expression; ``quote`` wraps variable names in ``|..|``
    (the form used on the solver wire)."""
    qv = _quoted_name if quote else _plain_name
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        # term = pos - negs + k, printed as (rel pos+k negs) or (rel pos negs-k)
        pos = [(v, c) for v, c in f.term.coeffs if c > 0]
        negs = [(v, -c) for v, c in f.term.coeffs if c < 0]
        k = f.term.const
        lhs = _sx_side(pos, k if k > 0 else Fraction(0), qv)
        rhs = _sx_side(negs, -k if k < 0 else Fraction(0), qv)
        if f.rel == "!=" and quote:
            return f"(not (= {lhs} {rhs}))"
        return f"({f.rel} {lhs} {rhs})"
    if isinstance(f, Not):
        return f"(not {to_sexpr(f.arg, quote)})"
    if isinstance(f, _NAry):
        return f"({f._kind} " + " ".join(to_sexpr(a, quote) for a in f.args) + ")"
    if isinstance(f, _Quant):
        if quote:
            binders = " ".join(f"({qv(v)} {'Int' if v.sort == INT else 'Real'})" for v in f.vars)
        else:
            binders = " ".join(qv(v) for v in f.vars)
        return f"({f._kind} ({binders}) {to_sexpr(f.body, quote)})"
    raise FormulaError(f"not a formula: {f!r}")


def _term_infix(t: LinTerm) -> str:
    out = []
    for v, c in t.coeffs:
        mag = abs(c)
        body = v.name if mag == 1 else f"{_num(mag)}*{v.name}"
        if not out:
            out.append(body if c > 0 else "-" + body)
        else:
            out.append(("+ " if c > 0 else "- ") + body)
    if t.const or not out:
        if not out:
            out.append(_num(t.const))
        else:
            out.append(("+ " if t.const > 0 else "- ") + _num(abs(t.const)))
    return " ".join(out)


_INFIX_REL = {"<": "<", "<=": "<=", "=": "=", "!=": "!="}


def pretty(f: Formula) -> str:
    """Human-readable infix rendering, e.g. ``x' = x + 1 & 0 <= x``."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        pos = LinTerm([(v, c) for v, c in f.term.coeffs if c > 0])
        negs = LinTerm([(v, -c) for v, c in f.term.coeffs if c < 0])
        k = f.term.const
        if pos.is_const() and f.rel in ("=", "!="):
            pos, negs = negs, pos
            k = -k
        rhs = negs + LinTerm.constant(-k)
        return f"{_term_infix(pos)} {_INFIX_REL[f.rel]} {_term_infix(rhs)}"
    if isinstance(f, Not):
        return f"!({pretty(f.arg)})"
    if isinstance(f, And):
        return " & ".join(_paren(a) for a in f.args)
    if isinstance(f, Or):
        return " | ".join(_paren(a) for a in f.args)
    if isinstance(f, _Quant):
        return f"{f._kind} {','.join(v.name for v in f.vars)}. ({pretty(f.body)})"
    raise FormulaError(f"not a formula: {f!r}")


def _paren(f: Formula) -> str:
    s = pretty(f)
    return f"({s})" if isinstance(f, (And, Or, _Quant)) else s


# ---------------------------------------------------------------------------
# Parsing


class ParseError(FormulaError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.msg = msg
        self.line = line
        self.col = col


_TOKEN = re.compile(r"\s*(?:(;[^\n]*)|(\()|(\))|(\|[^|]*\|)|([^\s()|;]+))")


def tokenize(text: str, line: int = 1, col: int = 1) -> List[Tuple[str, int, int]]:
    """Split s-expression text into ``(token, line, col)`` triples."""
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            ln, cl = _loc(text, pos, line, col)
            raise ParseError(f"unexpected character {text[pos]!r}", ln, cl)
        if m.group(1) is None:
            start = m.start(m.lastindex)
            ln, cl = _loc(text, start, line, col)
            out.append((m.group(m.lastindex), ln, cl))
        pos = m.end()
    return out


def _loc(text: str, pos: int, line: int, col: int) -> Tuple[int, int]:
    before = text[:pos]
    nl = before.count("\n")
    if nl == 0:
        return line, col + pos
    return line + nl, pos - before.rfind("\n")


def read_sexpr(tokens, i: int = 0):
    """Read one s-expression starting at ``tokens[i]``; returns (tree, next)."""
    if i >= len(tokens):
        raise ParseError("unexpected end of formula")
    tok, ln, cl = tokens[i]
    if tok == "(":
        items = []
        i += 1
        while True:
            if i >= len(tokens):
                raise ParseError("unbalanced parenthesis", ln, cl)
            if tokens[i][0] == ")":
                return _Node(items, ln, cl), i + 1
            item, i = read_sexpr(tokens, i)
            items.append(item)
    if tok == ")":
        raise ParseError("unexpected ')'", ln, cl)
    return _Leaf(tok, ln, cl), i + 1


class _Leaf:
    __slots__ = ("tok", "line", "col")

    def __init__(self, tok, line, col):
        self.tok, self.line, self.col = tok, line, col


class _Node:
    __slots__ = ("items", "line", "col")

    def __init__(self, items, line, col):
        self.items, self.line, self.col = items, line, col


_NUM = re.compile(r"-?\d+(?:\.\d+)?(?:/\d+)?\Z")


def _parse_number(tok: str) -> Optional[Fraction]:
    if _NUM.match(tok):
        return Fraction(tok)
    return None


class FormulaReader:
    """Builds formulas from s-expressions.

    ``sorts`` maps base names to sorts; with ``strict`` unknown names are
    rejected (the model loader uses this), otherwise they default to
    rationals.
    """

    def __init__(self, sorts: Optional[Mapping[str, str]] = None, strict: bool = False):
        self.sorts = dict(sorts or {})
        self.strict = strict

    def var(self, name: str, node) -> VarRef:
        if name.startswith("|") and name.endswith("|"):
            name = name[1:-1]
        tag: Tag = PLAIN
        base = name
        if name.endswith("'"):
            base, tag = name[:-1], PRIMED
        elif "@" in name:
            base, _, idx = name.rpartition("@")
            if not idx.isdigit():
                raise ParseError(f"bad step index in {name!r}", node.line, node.col)
            tag = int(idx)
        core = base.split("#", 1)[0]
        if not _IDENT.match(core):
            raise ParseError(f"bad variable name {name!r}", node.line, node.col)
        if self.strict and base not in self.sorts:
            raise ParseError(f"undeclared variable {base!r}", node.line, node.col)
        return VarRef(base, tag, self.sorts.get(base, RAT))

    def term(self, node) -> LinTerm:
        if isinstance(node, _Leaf):
            n = _parse_number(node.tok)
            if n is not None:
                return LinTerm.constant(n)
            return LinTerm.of_var(self.var(node.tok, node))
        if not node.items:
            raise ParseError("empty term", node.line, node.col)
        head = node.items[0]
        if not isinstance(head, _Leaf):
            raise ParseError("expected an operator", node.line, node.col)
        op = head.tok
        args = [self.term(a) for a in node.items[1:]]
        if op == "+":
            out = LinTerm.constant(0)
            for a in args:
                out = out + a
            return out
        if op == "-":
            if not args:
                raise ParseError("'-' needs an argument", node.line, node.col)
            if len(args) == 1:
                return -args[0]
            out = args[0]
            for a in args[1:]:
                out = out - a
            return out
        if op == "*":
            out = LinTerm.constant(1)
            for a in args:
                if out.is_const():
                    out = a.scale(out.const)
                elif a.is_const():
                    out = out.scale(a.const)
                else:
                    raise ParseError("nonlinear term: product of two variables", node.line, node.col)
            return out
        if op == "/":
            if len(args) != 2 or not args[1].is_const() or args[1].const == 0:
                raise ParseError("'/' needs a nonzero constant divisor", node.line, node.col)
            return args[0].scale(1 / args[1].const)
        if op == "to_real":
            return args[0]
        raise ParseError(f"unknown term operator {op!r}", node.line, node.col)

    def formula(self, node) -> Formula:
        if isinstance(node, _Leaf):
            if node.tok == "true":
                return TRUE
            if node.tok == "false":
                return FALSE
            raise ParseError(f"expected a formula, got {node.tok!r}", node.line, node.col)
        if not node.items:
            raise ParseError("empty formula", node.line, node.col)
        head = node.items[0]
        if not isinstance(head, _Leaf):
            raise ParseError("expected an operator", node.line, node.col)
        op = head.tok
        rest = node.items[1:]
        if op == "and":
            return conj([self.formula(a) for a in rest])
        if op == "or":
            return disj([self.formula(a) for a in rest])
        if op == "not":
            if len(rest) != 1:
                raise ParseError("'not' takes one argument", node.line, node.col)
            return neg(self.formula(rest[0]))
        if op in ("=>", "implies"):
            return implies(self.formula(rest[0]), self.formula(rest[1]))
        if op in ("exists", "forall"):
            if len(rest) != 2 or not isinstance(rest[0], _Node):
                raise ParseError(f"'{op}' takes a variable list and a body", node.line, node.col)
            vs = []
            for b in rest[0].items:
                if isinstance(b, _Node):  # SMT-LIB style (x Real)
                    b = b.items[0]
                vs.append(self.var(b.tok, b))
            body = self.formula(rest[1])
            return exists(vs, body) if op == "exists" else forall(vs, body)
        if op == "let":
            if self.strict:
                raise ParseError("'let' is not supported", node.line, node.col)
            return self.formula(_expand_let(node, {}))
        if op in ("<", "<=", "=", "!=", ">", ">=", "distinct"):
            if len(rest) < 2:
                raise ParseError(f"'{op}' takes two arguments", node.line, node.col)
            terms = [self.term(a) for a in rest]
            parts = []
            for a, b in zip(terms, terms[1:]):
                if op == "<":
                    parts.append(lt(a, b))
                elif op == "<=":
                    parts.append(le(a, b))
                elif op == ">":
                    parts.append(lt(b, a))
                elif op == ">=":
                    parts.append(le(b, a))
                elif op == "=":
                    parts.append(eq(a, b))
                else:
                    parts.append(ne(a, b))
            return conj(parts)
        raise ParseError(f"unknown formula operator {op!r}", node.line, node.col)


def _expand_let(node, env):
    """Inline ``let`` bindings (solver output uses them for sharing)."""
    if isinstance(node, _Leaf):
        return env.get(node.tok, node)
    items = node.items
    if items and isinstance(items[0], _Leaf) and items[0].tok == "let":
        if len(items) != 3 or not isinstance(items[1], _Node):
            raise ParseError("malformed 'let'", node.line, node.col)
        inner = dict(env)
        for b in items[1].items:
            if not isinstance(b, _Node) or len(b.items) != 2 or not isinstance(b.items[0], _Leaf):
                raise ParseError("malformed 'let' binding", node.line, node.col)
            inner[b.items[0].tok] = _expand_let(b.items[1], env)
        return _expand_let(items[2], inner)
    return _Node([_expand_let(i, env) for i in items], node.line, node.col)


def parse_formula(text: str, sorts: Optional[Mapping[str, str]] = None, strict: bool = False) -> Formula:
    """Parse one formula in s-expression syntax."""
    tokens = tokenize(text)
    if not tokens:
        raise ParseError("empty formula", 1, 1)
    tree, nxt = read_sexpr(tokens)
    if nxt != len(tokens):
        _, ln, cl = tokens[nxt]
        raise ParseError("trailing input after formula", ln, cl)
    return FormulaReader(sorts, strict).formula(tree)


def parse_term(text: str, sorts: Optional[Mapping[str, str]] = None) -> LinTerm:
    tokens = tokenize(text)
    tree, _ = read_sexpr(tokens)
    return FormulaReader(sorts).term(tree)


F = parse_formula


# ---------------------------------------------------------------------------
# Step indexing for path formulas


def at_step(f: Formula, i: int) -> Formula:
    """Plain variables of ``f`` become step ``i`` copies."""
    return rename(f, {PLAIN: i})


def edge_at(f: Formula, i: int) -> Formula:
    """Two-vocabulary ``f(x, x')`` becomes ``f(x@(i-1), x@i)``."""
    return rename(f, {PLAIN: i - 1, PRIMED: i})


def unstep(f: Formula, i: int) -> Formula:
    """Step ``i`` copies become plain variables."""
    return rename(f, {i: PLAIN})


def tidy(f: Formula) -> Formula:
    """Cosmetic simplification: ``t <= 0 & -t <= 0`` becomes ``t = 0``."""
    if isinstance(f, Or):
        return disj([tidy(a) for a in f.args])
    if not isinstance(f, And):
        return f
    args = [tidy(a) for a in f.args]
    les = {a.term: a for a in args if isinstance(a, Atom) and a.rel == "<="}
    out = []
    done = set()
    for a in args:
        if isinstance(a, Atom) and a.rel == "<=":
            if a.term in done:
                continue
            if -a.term in les:
                done.add(-a.term)
                done.add(a.term)
                out.append(atom(a.term, "="))
                continue
        out.append(a)
    return conj(out)
