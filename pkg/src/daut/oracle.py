"""Bounded brute-force checks used to cross-validate the checker.

Nothing here abstracts or interpolates: paths are enumerated symbolically,
each path formula goes to a plain satisfiability query, and concrete traces
are checked by evaluating guards on valuation pairs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterator, List, Sequence, Tuple, Union

from .automata import (
    DataAutomaton,
    Network,
    Trace,
    product_successors,
    trace_restrict,
)
from .formula import (
    INT,
    Formula,
    VarRef,
    at_step,
    conj,
    disj,
    edge_at,
    eq,
    evaluate,
    LinTerm,
    merge_valuations,
    neg,
)

DEFAULT_DEPTH = 4
DEFAULT_GRID = (Fraction(0), Fraction(1, 2), Fraction(1), Fraction(2))
PATH_CAP = 10**6


class OracleError(Exception):
    pass


@dataclass(frozen=True)
class NoneFound:
    depth: int
    found = False

    def __str__(self):
        return f"NONE_FOUND depth={self.depth}"


@dataclass(frozen=True)
class Found:
    trace: Trace
    path: Tuple[str, ...]
    found = True

    def __str__(self):
        return f"FOUND length={len(self.path)}"


BoundedResult = Union[NoneFound, Found]


def _default_solver(solver):
    if solver is not None:
        return solver
    from .solver import BuiltinSolver

    return BuiltinSolver(relax_integers=True)


def _accepting(net, obs, qvec, pset):
    return net.is_final(qvec) and not (set(pset) & obs.finals)


def _path_formula(thetas: Sequence[Formula]) -> Formula:
    return conj([edge_at(t, i + 1) for i, t in enumerate(thetas)])


def concrete_trace(net: Network, solver, thetas: Sequence[Formula], events: Sequence[str], start: Formula = None):
    """A trace over all network variables realizing the path, plus whether an
    integer variable got a fractional value (rational relaxation)."""
    f = _path_formula(thetas)
    if start is not None:
        f = conj(at_step(start, 0), f)
    res = solver.is_sat(f)
    if not res.sat:
        raise OracleError("path formula is unsatisfiable")
    model = res.model or {}
    vals = []
    relaxed = False
    for i in range(len(events) + 1):
        nu = {}
        for name in sorted(net.vars):
            x = model.get(VarRef(name, i, net.sorts[name]), Fraction(0))
            if net.sorts[name] == INT and x.denominator != 1:
                relaxed = True
            nu[name] = x
        vals.append(nu)
    return Trace.of(vals, events), relaxed


# ---------------------------------------------------------------------------
# Symbolic path enumeration


def _product_paths(net, obs, qvec, pset, depth, solver, start: Formula, prune=True, cap=PATH_CAP):
    """Breadth-first stream of ``(events, thetas, qvec, pset)`` from the given
    control state, shortest first.  With ``prune``, prefixes whose formula is
    unsatisfiable are cut."""
    level = [((), (), tuple(qvec), frozenset(pset))]
    count = 0
    for d in range(depth + 1):
        nxt = []
        for events, thetas, q, p in level:
            count += 1
            if count > cap:
                raise OracleError(f"more than {cap} paths; raise the cap or lower the depth")
            yield events, thetas, q, p
            if d == depth:
                continue
            for ev in net.alphabet:
                for (r, pp), theta in product_successors(net, obs, q, p, ev, solver):
                    th = thetas + (theta,)
                    if prune:
                        f = conj(at_step(start, 0), _path_formula(th))
                        if not solver.is_sat(f).sat:
                            continue
                    nxt.append((events + (ev,), th, r, pp))
        level = nxt


def bounded_emptiness(net: Network, obs: DataAutomaton, depth: int = DEFAULT_DEPTH, solver=None, cap: int = PATH_CAP) -> BoundedResult:
    """First (shortest, then in event/subset order) feasible accepting
    product path of length at most ``depth``."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    solver = _default_solver(solver)
    from .formula import TRUE

    for events, thetas, q, p in _product_paths(net, obs, net.initial, {obs.initial}, depth, solver, TRUE, cap=cap):
        if not _accepting(net, obs, q, p):
            continue
        if solver.is_sat(_path_formula(thetas)).sat:
            w, _ = concrete_trace(net, solver, thetas, events)
            return Found(trace_restrict(w, obs.vars), events)
    return NoneFound(depth)


# ---------------------------------------------------------------------------
# Membership


def count_runs(a: DataAutomaton, w: Trace, accepting_only: bool = True) -> int:
    """Number of (accepting) runs of ``a`` over a concrete trace."""
    if not set(a.vars) <= set(w.domain):
        raise OracleError(f"trace does not define {sorted(set(a.vars) - set(w.domain))}")
    runs = {a.initial: 1}
    for i, ev in enumerate(w.events):
        nu = merge_valuations(w.valuation(i), w.valuation(i + 1), a.sorts)
        nxt: Dict[str, int] = {}
        for q, n in runs.items():
            for r in a.rules_from(q, ev):
                if evaluate(r.guard, nu):
                    nxt[r.dst] = nxt.get(r.dst, 0) + n
        runs = nxt
    if accepting_only:
        return sum(n for q, n in runs.items() if q in a.finals)
    return sum(runs.values())


def _network_accepts(net: Network, w: Trace, solver) -> bool:
    """Some network run matches the events and agrees with ``w`` on its
    variables (the others are existentially chosen)."""
    from .automata import expansion_successors

    known = [x for x in w.domain if x in net.vars]
    pins = []
    for i in range(len(w) + 1):
        nu = w.valuation(i)
        for x in known:
            pins.append(eq(LinTerm.of_var(VarRef(x, i, net.sorts[x])), LinTerm.constant(nu[x])))
    pin = conj(pins)
    paths = [(net.initial, ())]
    for ev in w.events:
        nxt = []
        for q, th in paths:
            for r, theta in expansion_successors(net, q, ev):
                nth = th + (theta,)
                if solver.is_sat(conj(pin, _path_formula(nth))).sat:
                    nxt.append((r, nth))
        paths = nxt
    return any(net.is_final(q) for q, _ in paths)


def trace_membership(obj, w: Trace, solver=None) -> bool:
    """``w`` is in the language of a data automaton, or in the restriction
    of a network's language to ``w``'s variables."""
    if isinstance(obj, Network):
        return _network_accepts(obj, w, _default_solver(solver))
    return count_runs(obj, w) > 0


# ---------------------------------------------------------------------------
# Subsumption witnesses


def residual_escape_check(net: Network, obs: DataAutomaton, s, t, depth: int = 3, solver=None) -> BoundedResult:
    """Look for a trace accepted from ``s`` but not from ``t``.

    ``s`` and ``t`` are product states of the network with the complemented
    observer.  For every feasible accepting path from ``s`` the same events
    are replayed from ``t``; the witness formula asks for valuations that
    follow the ``s`` path while avoiding every accepting ``t`` path.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    solver = _default_solver(solver)
    t_paths: Dict[Tuple[str, ...], List[Tuple[Formula, ...]]] = {}
    for events, thetas, q, p in _product_paths(net, obs, t.qvec, t.pset, depth, solver, t.phi, prune=False):
        if _accepting(net, obs, q, p):
            t_paths.setdefault(events, []).append(thetas)
    for events, thetas, q, p in _product_paths(net, obs, s.qvec, s.pset, depth, solver, s.phi):
        if not _accepting(net, obs, q, p):
            continue
        follow = conj(at_step(s.phi, 0), _path_formula(thetas))
        replays = [conj(at_step(t.phi, 0), _path_formula(th)) for th in t_paths.get(events, [])]
        f = conj(follow, neg(disj(replays))) if replays else follow
        res = solver.is_sat(f)
        if res.sat:
            vals = []
            for i in range(len(events) + 1):
                vals.append({x: res.model.get(VarRef(x, i, net.sorts[x]), Fraction(0)) for x in sorted(net.vars)})
            return Found(Trace.of(vals, events), events)
    return NoneFound(depth)


# ---------------------------------------------------------------------------
# Grid traces


def all_grid_traces(vars: Sequence[str], alphabet: Sequence[str], depth: int, grid: Sequence) -> Iterator[Trace]:
    grid = [Fraction(g) for g in grid]
    if not grid and vars:
        return
    vals = [dict(zip(vars, combo)) for combo in itertools.product(grid, repeat=len(vars))]
    for n in range(depth + 1):
        for evs in itertools.product(sorted(alphabet), repeat=n):
            for seq in itertools.product(vals, repeat=n + 1):
                yield Trace.of(seq, evs)


def grid_traces(a: DataAutomaton, depth: int, grid: Sequence = DEFAULT_GRID) -> Iterator[Trace]:
    """Traces with grid valuations of length at most ``depth`` accepted by ``a``."""
    for w in all_grid_traces(a.vars, a.alphabet, depth, grid):
        if trace_membership(a, w):
            yield w
