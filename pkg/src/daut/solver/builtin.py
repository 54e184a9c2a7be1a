"""Self-contained rational engine.

Satisfiability runs a small case-splitting search over the disjunctions of
a negation normal form, deciding each conjunction of literals with
Fourier-Motzkin.  Splits record which decision introduced each literal, so
a refutation that never touched a split's literals closes the split without
exploring its siblings.  Interpolants fall out of the same search: a split
on an A-side disjunction combines child interpolants with OR, a B-side
split with AND, and each refuted leaf contributes the A-part of its Farkas
sum.
"""

from __future__ import annotations

import os
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from ..formula import (
    FALSE,
    INT,
    TRUE,
    And,
    Atom,
    BudgetExceeded,
    Const,
    Exists,
    Forall,
    Formula,
    LinTerm,
    Or,
    VarRef,
    all_vars,
    atom,
    conj,
    disj,
    dnf_cubes,
    evaluate,
    fresh_like,
    free_vars,
    is_quantifier_free,
    neg,
    nnf,
    rename_vars,
    tidy,
    unstep,
)
from . import fm
from .base import (
    FarkasCert,
    LeafCert,
    SatInput,
    SatResult,
    SolverStats,
    UnsupportedSort,
    cut_formulas,
    validate_interpolant,
)

DEFAULT_CUBE_BUDGET = 100_000


def _debug_default() -> bool:
    return os.environ.get("DAUT_DEBUG", "") not in ("", "0")


class _Unsat:
    __slots__ = ("itp", "levels", "leaves")

    def __init__(self, itp, levels, leaves):
        self.itp = itp
        self.levels = levels
        self.leaves = leaves


class _Search:
    """Case-splitting search over tagged NNF parts."""

    def __init__(self, engine: "BuiltinSolver", want_itp: bool):
        self.engine = engine
        self.want_itp = want_itp
        self.model = None

    def run(self, a: Formula, b: Formula):
        lits: List[Tuple[Atom, bool, int]] = []  # (atom, is_a, level)
        pending: List[Tuple[Formula, bool, int]] = []
        bad = self._add(a, True, 0, lits, pending)
        bad = bad or self._add(b, False, 0, lits, pending)
        if bad is not None:
            return self._const_refute(bad)
        return self._solve(lits, pending, 0)

    def _const_refute(self, side_a: bool):
        itp = FALSE if side_a else TRUE
        return _Unsat(itp, {0}, [])

    def _add(self, f: Formula, side: bool, level: int, lits, pending):
        """Add a part; returns the side of a literal FALSE, else None."""
        stack = [f]
        while stack:
            g = stack.pop()
            if isinstance(g, Atom):
                lits.append((g, side, level))
            elif isinstance(g, And):
                stack.extend(reversed(g.args))
            elif isinstance(g, Or):
                pending.append((g, side, level))
            elif isinstance(g, Const):
                if not g.value:
                    return side
            else:
                raise TypeError(f"unexpected node {type(g).__name__} in prepared formula")
        return None

    def _solve(self, lits, pending, depth):
        eng = self.engine
        eng._tick()
        atoms = tuple(l[0] for l in lits)
        ok, res = eng._feasible(atoms)
        if not ok:
            return self._leaf(lits, res)
        if not pending:
            self.model = res
            return None
        disj_f, side, lvl = pending[0]
        rest = pending[1:]
        level = depth + 1
        subs = []
        used = set()
        touched = False
        leaves = []
        for d in disj_f.args:
            lits2 = list(lits)
            pend2 = list(rest)
            bad = self._add(d, side, level, lits2, pend2)
            if bad is not None:
                sub = _Unsat(FALSE if bad else TRUE, {level}, [])
            else:
                sub = self._solve(lits2, pend2, level)
                if sub is None:
                    return None
            if level not in sub.levels:
                # the refutation never used this split
                return sub
            touched = True
            used |= sub.levels - {level}
            subs.append(sub.itp)
            leaves.extend(sub.leaves)
        if touched:
            used.add(lvl)
        itp = None
        if self.want_itp:
            itp = disj(subs) if side else conj(subs)
        return _Unsat(itp, used, leaves)

    def _leaf(self, lits, conflict: fm.Conflict):
        atoms = tuple(l[0] for l in lits)
        if self.want_itp:
            # prefer a refutation by one side alone: gives TRUE/FALSE
            for want_a in (False, True):
                idx = [i for i, l in enumerate(lits) if l[1] == want_a]
                if len(idx) == len(lits) or not idx:
                    continue
                sub = tuple(atoms[i] for i in idx)
                ok, res = self.engine._feasible(sub)
                if not ok:
                    conflict = fm.Conflict({idx[k]: m for k, m in res.origin.items()}, res.strict)
                    break
        used = {lits[i][2] for i in conflict.origin}
        if not used:
            used = {0}
        leaf = LeafCert(atoms, tuple(sorted(conflict.origin.items())), conflict.strict)
        itp = None
        if self.want_itp:
            a_idx = {i: m for i, m in conflict.origin.items() if lits[i][1]}
            term = fm.combine(atoms, a_idx) if a_idx else LinTerm.constant(0)
            strict = any(m > 0 and atoms[i].rel == "<" for i, m in a_idx.items())
            itp = atom(term, "<" if strict else "<=")
        return _Unsat(itp, used, [leaf])


class BuiltinSolver:
    """Exact rational LRA engine with Farkas certificates.

    ``relax_integers`` treats integer-sorted variables as rationals, an
    approximation whose verdicts are reported as relaxed; otherwise such
    variables raise :class:`UnsupportedSort`.  With ``debug`` every model and certificate is
    re-checked.
    """

    name = "builtin"

    def __init__(self, cube_budget: int = DEFAULT_CUBE_BUDGET, relax_integers: bool = False, debug: Optional[bool] = None):
        self.cube_budget = cube_budget
        self.relax_integers = relax_integers
        self.debug = _debug_default() if debug is None else debug
        self.stats = SolverStats()
        self._sat_cache: Dict[Formula, SatResult] = {}
        self._feas_cache: Dict[Tuple[Atom, ...], tuple] = {}
        self._leaf_count = 0

    # -- plumbing -------------------------------------------------------

    def _tick(self):
        self._leaf_count += 1
        self.stats.leaves += 1
        if self._leaf_count > self.cube_budget:
            raise BudgetExceeded(f"more than {self.cube_budget} cases in one query")

    def _feasible(self, atoms: Tuple[Atom, ...]):
        hit = self._feas_cache.get(atoms)
        if hit is not None:
            return hit
        res = fm.feasible(atoms)
        if len(self._feas_cache) > 50_000:
            self._feas_cache.clear()
        self._feas_cache[atoms] = res
        return res

    def _check_sorts(self, f: Formula):
        if self.relax_integers:
            return
        for v in all_vars(f):
            if v.sort == INT:
                raise UnsupportedSort(f"integer variable {v.name} needs an external solver (or --relax-int)")

    def prepare(self, f: Formula) -> Formula:
        """Quantifier-free, NNF, ``!=``-split equisatisfiable form.

        Outer existentials become fresh variables; universals are removed by
        elimination.
        """
        self._check_sorts(f)
        return self._prep(nnf(f, split=True))

    def _prep(self, f: Formula) -> Formula:
        if isinstance(f, (Const, Atom)):
            return f
        if isinstance(f, And):
            return conj([self._prep(a) for a in f.args])
        if isinstance(f, Or):
            return disj([self._prep(a) for a in f.args])
        if isinstance(f, Exists):
            fresh = {v: fresh_like(v) for v in f.vars}
            return self._prep(rename_vars(f.body, fresh))
        if isinstance(f, Forall):
            return nnf(self.qe(f), split=True)
        raise TypeError(f"unexpected node {type(f).__name__}")

    def qe(self, f: Formula) -> Formula:
        """Quantifier-free equivalent of ``f``."""
        if is_quantifier_free(f):
            return f
        if isinstance(f, Exists):
            return self.fm_eliminate(f.vars, self.qe(f.body))
        if isinstance(f, Forall):
            return neg(self.fm_eliminate(f.vars, nnf(neg(self.qe(f.body)), split=True)))
        if isinstance(f, And):
            return conj([self.qe(a) for a in f.args])
        if isinstance(f, Or):
            return disj([self.qe(a) for a in f.args])
        return neg(self.qe(f.arg))

    # -- queries --------------------------------------------------------

    def is_sat(self, f: Formula) -> SatResult:
        self.stats.queries += 1
        self.stats.sat_calls += 1
        hit = self._sat_cache.get(f)
        if hit is not None:
            self.stats.cache_hits += 1
            return hit
        g = self.prepare(f)
        self._leaf_count = 0
        search = _Search(self, want_itp=False)
        out = search.run(g, TRUE)
        if out is None:
            fv = free_vars(f)
            model = {v: search.model.get(v, Fraction(0)) for v in fv}
            if self.debug:
                full = dict(search.model)
                for v in all_vars(g):
                    full.setdefault(v, Fraction(0))
                assert evaluate(g, full), f"model check failed for {f!r}"
                if is_quantifier_free(f):
                    assert evaluate(f, model), f"model check failed for {f!r}"
            res = SatResult(True, model=model)
        else:
            cert = FarkasCert(tuple(out.leaves))
            if self.debug:
                assert cert.check(), f"bad certificate for {f!r}"
            res = SatResult(False, cert=cert)
        if len(self._sat_cache) > 100_000:
            self._sat_cache.clear()
        self._sat_cache[f] = res
        return res

    def entails(self, phi: Formula, psi: Formula) -> bool:
        if psi == TRUE or phi == FALSE or phi == psi:
            return True
        if isinstance(phi, And) and (psi in phi.args or (isinstance(psi, And) and set(psi.args) <= set(phi.args))):
            return True
        return not self.is_sat(conj(phi, neg(psi))).sat

    def equivalent(self, a: Formula, b: Formula) -> bool:
        return self.entails(a, b) and self.entails(b, a)

    def binary_interpolant(self, a: Formula, b: Formula) -> Formula:
        """``I`` with ``a -> I``, ``I & b`` unsat, over shared variables."""
        self.stats.queries += 1
        ga, gb = self.prepare(a), self.prepare(b)
        self._leaf_count = 0
        search = _Search(self, want_itp=True)
        out = search.run(ga, gb)
        if out is None:
            raise SatInput("interpolation input is satisfiable")
        if self.debug:
            assert FarkasCert(tuple(out.leaves)).check()
        return tidy(out.itp)

    def seq_interpolant(self, phi: Formula, thetas: Sequence[Formula]) -> List[Formula]:
        """Inductive sequence interpolant ``I_0..I_m`` over plain variables."""
        self.stats.itp_calls += 1
        p0, edges = cut_formulas(phi, thetas)
        m = len(edges)
        seq: List[Formula] = []
        prefix = p0
        for i in range(m):
            itp = self.binary_interpolant(prefix, conj(edges[i:]))
            seq.append(itp)
            prefix = conj(itp, edges[i])
        if self.is_sat(prefix).sat:
            raise SatInput("path formula is satisfiable")
        seq.append(FALSE)
        return [unstep(s, i) for i, s in enumerate(seq)]

    def validate_interpolant(self, phi, thetas, seq) -> bool:
        return validate_interpolant(self, phi, thetas, seq)

    def fm_eliminate(self, vars: Iterable[VarRef], f: Formula) -> Formula:
        """Quantifier-free equivalent of ``exists vars. f`` (``f`` quantifier-free)."""
        vs = frozenset(vars)
        if not is_quantifier_free(f):
            f = self.qe(f)
        for v in vs:
            if v.sort == INT and not self.relax_integers:
                raise UnsupportedSort(f"cannot eliminate integer variable {v.name}")
        vs = vs & free_vars(f)
        if not vs:
            return f
        out = []
        seen = set()
        for cube in dnf_cubes(f, self.cube_budget):
            rows = fm.project(cube, vs)
            if rows is None:
                continue
            c = conj([fm.row_atom(r) for r in rows])
            if c == TRUE:
                return TRUE
            if c not in seen:
                seen.add(c)
                out.append(c)
        return disj(out)

    def close(self):
        pass
