"""Data automata, networks, traces and the observer subset construction."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Sequence, Tuple

from .formula import (
    PLAIN,
    PRIMED,
    RAT,
    Formula,
    LinTerm,
    VarRef,
    conj,
    disj,
    eq,
    free_vars,
    neg,
)

PAD = "<pad>"
MAX_POOL = 16
DEFAULT_STATE_BOUND = 12


class AutomatonError(Exception):
    pass


class StateBoundExceeded(AutomatonError):
    pass


@dataclass(frozen=True)
class Rule:
    src: str
    event: str
    guard: Formula
    dst: str


@dataclass(eq=False)
class DataAutomaton:
    """A finite automaton whose rules carry formulas over ``x`` and ``x'``."""

    name: str
    vars: Tuple[str, ...]
    alphabet: Tuple[str, ...]
    states: Tuple[str, ...]
    initial: str
    finals: FrozenSet[str]
    rules: Tuple[Rule, ...]
    sorts: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.vars = tuple(self.vars)
        self.alphabet = tuple(self.alphabet)
        self.states = tuple(self.states)
        self.finals = frozenset(self.finals)
        self.rules = tuple(self.rules)
        if self.initial not in self.states:
            raise AutomatonError(f"{self.name}: initial state {self.initial!r} is not a state")
        if not self.finals <= set(self.states):
            raise AutomatonError(f"{self.name}: unknown final states {sorted(self.finals - set(self.states))}")
        allowed = {VarRef(v, t, self.sort(v)) for v in self.vars for t in (PLAIN, PRIMED)}
        self._out: Dict[Tuple[str, str], List[Rule]] = {}
        for r in self.rules:
            if r.event == PAD:
                raise AutomatonError(f"{self.name}: the padding symbol cannot label a rule")
            if r.event not in self.alphabet:
                raise AutomatonError(f"{self.name}: event {r.event!r} not in alphabet")
            if r.src not in self.states or r.dst not in self.states:
                raise AutomatonError(f"{self.name}: rule {r.src}->{r.dst} uses an unknown state")
            extra = free_vars(r.guard) - allowed
            if extra:
                names = ", ".join(sorted(v.name for v in extra))
                raise AutomatonError(f"{self.name}: guard of {r.src}->{r.dst} uses undeclared {names}")
            self._out.setdefault((r.src, r.event), []).append(r)

    def sort(self, v: str) -> str:
        return self.sorts.get(v, RAT)

    def rules_from(self, state: str, event: str) -> List[Rule]:
        return self._out.get((state, event), [])

    def var_refs(self, tag=PLAIN) -> List[VarRef]:
        return [VarRef(v, tag, self.sort(v)) for v in self.vars]

    def __repr__(self):
        return f"DataAutomaton({self.name!r}, {len(self.states)} states, {len(self.rules)} rules)"


def frame(names: Iterable[str], sorts: Mapping[str, str]) -> Formula:
    """``x' = x`` for every name."""
    return conj(
        [eq(LinTerm.of_var(VarRef(n, PRIMED, sorts.get(n, RAT))), LinTerm.of_var(VarRef(n, PLAIN, sorts.get(n, RAT)))) for n in sorted(names)]
    )


@dataclass(eq=False)
class Network:
    """Components run synchronously on shared events; parameters never change.

    Component states are positional, so two components may reuse state
    names.  Parameters belong to every component's vocabulary.
    """

    components: Tuple[DataAutomaton, ...]
    params: Dict[str, str] = field(default_factory=dict)
    globals: Tuple[str, ...] = ()

    def __post_init__(self):
        self.components = tuple(self.components)
        if not self.components:
            raise AutomatonError("a network needs at least one component")
        self.sorts: Dict[str, str] = dict(self.params)
        for c in self.components:
            for v in c.vars:
                s = c.sort(v)
                if self.sorts.setdefault(v, s) != s:
                    raise AutomatonError(f"variable {v!r} declared with two sorts")
        self.alphabet = tuple(sorted({e for c in self.components for e in c.alphabet}))
        self.comp_vars = [frozenset(c.vars) | frozenset(self.params) for c in self.components]
        self.vars = tuple(sorted(self.sorts))

    @property
    def initial(self) -> Tuple[str, ...]:
        return tuple(c.initial for c in self.components)

    def is_final(self, qvec: Sequence[str]) -> bool:
        return all(q in c.finals for q, c in zip(qvec, self.components))

    def var_refs(self, tag=PLAIN) -> List[VarRef]:
        return [VarRef(v, tag, self.sorts[v]) for v in self.vars]

    def var_ref(self, name: str, tag=PLAIN) -> VarRef:
        return VarRef(name, tag, self.sorts[name])

    def local_vars(self, i: int) -> FrozenSet[str]:
        return frozenset(self.components[i].vars) - frozenset(self.globals) - frozenset(self.params)


def check_observer(net: Network, obs: DataAutomaton):
    missing = [v for v in obs.vars if v not in net.sorts]
    if missing:
        raise AutomatonError(f"observer variables {missing} are not network variables")
    for v in obs.vars:
        if obs.sort(v) != net.sorts[v]:
            raise AutomatonError(f"observer variable {v!r} has a different sort in the network")


def expansion_successors(net: Network, qvec: Sequence[str], event: str) -> List[Tuple[Tuple[str, ...], Formula]]:
    """Successor control vectors and relations of the network on ``event``."""
    if event == PAD:
        raise AutomatonError("the padding symbol never fires")
    if event not in net.alphabet:
        raise AutomatonError(f"unknown event {event!r}")
    active = [i for i, (c, q) in enumerate(zip(net.components, qvec)) if c.rules_from(q, event)]
    if not active:
        return []
    moving = set()
    for i in active:
        moving |= set(net.components[i].vars)
    idle = set()
    for j in range(len(net.components)):
        if j not in active:
            idle |= set(net.components[j].vars)
    frames = frame((idle - moving) | set(net.params), net.sorts)
    out = []
    choices = [net.components[i].rules_from(qvec[i], event) for i in active]
    for combo in itertools.product(*choices):
        rvec = list(qvec)
        for i, r in zip(active, combo):
            rvec[i] = r.dst
        phi = conj([r.guard for r in combo] + [frames])
        out.append((tuple(rvec), phi))
    return out


def _subsets_by_size(pool: Sequence[str]) -> Iterator[Tuple[str, ...]]:
    for k in range(len(pool) + 1):
        yield from itertools.combinations(pool, k)


def det_successors(obs: DataAutomaton, pset: FrozenSet[str], event: str, solver=None) -> List[Tuple[FrozenSet[str], Formula]]:
    """Subset-construction successors of observer set ``pset`` on ``event``.

    With a solver, candidates whose guard is unsatisfiable are dropped.
    """
    incoming: Dict[str, List[Formula]] = {}
    for p in sorted(pset):
        for r in obs.rules_from(p, event):
            incoming.setdefault(r.dst, []).append(r.guard)
    pool = sorted(incoming)
    if len(pool) > MAX_POOL:
        raise AutomatonError(f"observer successor pool of size {len(pool)} exceeds {MAX_POOL}")
    out = []
    for chosen in _subsets_by_size(pool):
        parts = []
        for p in pool:
            if p in chosen:
                parts.append(disj(incoming[p]))
            else:
                parts.extend(neg(g) for g in incoming[p])
        theta = conj(parts)
        if solver is not None and not solver.is_sat(theta).sat:
            continue
        out.append((frozenset(chosen), theta))
    return out


def product_successors(net: Network, obs: DataAutomaton, qvec, pset, event: str, solver=None):
    """``((rvec, S), theta)`` for the network paired with the complemented observer."""
    out = []
    net_succ = expansion_successors(net, qvec, event)
    if not net_succ:
        return out
    obs_succ = det_successors(obs, pset, event, solver)
    for rvec, phi in net_succ:
        for s, th in obs_succ:
            theta = conj(phi, th)
            if solver is not None and not solver.is_sat(theta).sat:
                continue
            out.append(((rvec, s), theta))
    return out


# ---------------------------------------------------------------------------
# Explicit constructions for small automata


def set_name(p: Iterable[str]) -> str:
    return "{" + ",".join(sorted(p)) + "}"


def determinize(a: DataAutomaton, solver, bound: int = DEFAULT_STATE_BOUND) -> DataAutomaton:
    """Reachable part of the subset construction (finals meet ``a.finals``)."""
    if len(a.states) > bound:
        raise StateBoundExceeded(
            f"{a.name} has {len(a.states)} states, over the bound {bound}; use the on-the-fly successor functions"
        )
    start = frozenset([a.initial])
    seen = {start: set_name(start)}
    order = [start]
    rules = []
    i = 0
    while i < len(order):
        p = order[i]
        i += 1
        for ev in a.alphabet:
            for q, theta in det_successors(a, p, ev, solver):
                if q not in seen:
                    seen[q] = set_name(q)
                    order.append(q)
                rules.append(Rule(seen[p], ev, theta, seen[q]))
    d = DataAutomaton(
        name=f"det({a.name})",
        vars=a.vars,
        alphabet=a.alphabet,
        states=[seen[p] for p in order],
        initial=seen[start],
        finals=[seen[p] for p in order if p & a.finals],
        rules=rules,
        sorts=dict(a.sorts),
    )
    d.subsets = {seen[p]: p for p in order}
    return d


def complement(a: DataAutomaton, solver, bound: int = DEFAULT_STATE_BOUND) -> DataAutomaton:
    d = determinize(a, solver, bound)
    c = DataAutomaton(
        name=f"co({a.name})",
        vars=d.vars,
        alphabet=d.alphabet,
        states=d.states,
        initial=d.initial,
        finals=[s for s in d.states if not (d.subsets[s] & a.finals)],
        rules=d.rules,
        sorts=dict(d.sorts),
    )
    c.subsets = d.subsets
    return c


def product(a: DataAutomaton, b: DataAutomaton, solver=None) -> DataAutomaton:
    """Synchronous product on common events; accepts the intersection."""
    alphabet = tuple(e for e in a.alphabet if e in b.alphabet)
    sorts = dict(a.sorts)
    sorts.update(b.sorts)
    variables = tuple(sorted(set(a.vars) | set(b.vars)))

    def name(p, q):
        return f"({p},{q})"

    start = (a.initial, b.initial)
    seen = {start}
    order = [start]
    rules = []
    i = 0
    while i < len(order):
        p, q = order[i]
        i += 1
        for ev in alphabet:
            for r in a.rules_from(p, ev):
                for s in b.rules_from(q, ev):
                    g = conj(r.guard, s.guard)
                    if solver is not None and not solver.is_sat(g).sat:
                        continue
                    nxt = (r.dst, s.dst)
                    if nxt not in seen:
                        seen.add(nxt)
                        order.append(nxt)
                    rules.append(Rule(name(p, q), ev, g, name(*nxt)))
    return DataAutomaton(
        name=f"({a.name}x{b.name})",
        vars=variables,
        alphabet=alphabet,
        states=[name(*s) for s in order],
        initial=name(*start),
        finals=[name(*s) for s in order if s[0] in a.finals and s[1] in b.finals],
        rules=rules,
        sorts=sorts,
    )


def union(a: DataAutomaton, b: DataAutomaton, solver, bound: int = DEFAULT_STATE_BOUND) -> DataAutomaton:
    """Language union via complement of the product of complements.

    Both automata must share an alphabet and variable set for the identity
    to hold.
    """
    if set(a.alphabet) != set(b.alphabet) or set(a.vars) != set(b.vars):
        raise AutomatonError("union needs equal alphabets and variables")
    return complement(product(complement(a, solver, bound), complement(b, solver, bound), solver), solver, bound)


# ---------------------------------------------------------------------------
# Traces


@dataclass(frozen=True)
class Trace:
    """``vals[0] events[0] vals[1] ... vals[n] <pad>``."""

    vals: Tuple[Tuple[Tuple[str, Fraction], ...], ...]
    events: Tuple[str, ...]

    def __post_init__(self):
        if len(self.vals) != len(self.events) + 1:
            raise AutomatonError("a trace has one more valuation than events")
        if PAD in self.events:
            raise AutomatonError("the padding symbol only ends a trace")
        doms = {tuple(k for k, _ in v) for v in self.vals}
        if len(doms) > 1:
            raise AutomatonError("all valuations of a trace share a domain")

    @staticmethod
    def of(vals: Sequence[Mapping[str, object]], events: Sequence[str]) -> "Trace":
        return Trace(
            tuple(tuple(sorted((k, Fraction(x)) for k, x in v.items())) for v in vals),
            tuple(events),
        )

    def __len__(self):
        return len(self.events)

    def valuation(self, i: int) -> Dict[str, Fraction]:
        return dict(self.vals[i])

    @property
    def domain(self) -> Tuple[str, ...]:
        return tuple(k for k, _ in self.vals[0])

    def pairs(self):
        for i, v in enumerate(self.vals):
            yield dict(v), (self.events[i] if i < len(self.events) else PAD)

    def __str__(self):
        return format_trace(self)


def trace_restrict(w: Trace, ys: Iterable[str]) -> Trace:
    ys = set(ys)
    missing = ys - set(w.domain)
    if missing:
        raise AutomatonError(f"trace does not define {sorted(missing)}")
    return Trace(tuple(tuple((k, x) for k, x in v if k in ys) for v in w.vals), w.events)


def _fmt_val(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def format_trace(w: Trace) -> str:
    lines = []
    for i, (v, ev) in enumerate(w.pairs()):
        body = ",".join(f"{k}={_fmt_val(x)}" for k, x in sorted(v.items()))
        if ev == PAD:
            lines.append(f"step {i}: {{{body}}} {PAD}")
        else:
            lines.append(f"step {i}: {{{body}}} --{ev}-->")
    return "\n".join(lines)
