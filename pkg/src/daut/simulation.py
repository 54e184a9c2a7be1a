"""Data simulations on a single automaton and the subsumption they induce.

A relation over ``Q x D^x x Q`` is kept as a matrix of quantifier-free
formulas over the automaton's plain variables; entry ``(p, q)`` holds the
valuations under which ``q`` simulates ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .automata import DataAutomaton, Network
from .formula import (
    FALSE,
    PLAIN,
    PRIMED,
    TRUE,
    Formula,
    VarRef,
    conj,
    disj,
    neg,
    nnf,
    pretty,
    rename,
)
from .solver import UnsupportedSort

DEFAULT_K = 3


class SimulationError(Exception):
    pass


@dataclass
class SimMatrix:
    states: Tuple[str, ...]
    entries: Dict[Tuple[str, str], Formula]

    @staticmethod
    def filled(states: Sequence[str], value: Formula) -> "SimMatrix":
        return SimMatrix(tuple(states), {(p, q): value for p in states for q in states})

    @staticmethod
    def identity(states: Sequence[str]) -> "SimMatrix":
        return SimMatrix(tuple(states), {(p, q): TRUE if p == q else FALSE for p in states for q in states})

    def __getitem__(self, key: Tuple[str, str]) -> Formula:
        return self.entries[key]

    def __setitem__(self, key, value):
        self.entries[key] = value

    def row(self, p: str) -> List[Formula]:
        return [self.entries[(p, q)] for q in self.states]

    def copy(self) -> "SimMatrix":
        return SimMatrix(self.states, dict(self.entries))

    def format(self) -> str:
        """One line per entry, rows in state order."""
        width = max(len(s) for s in self.states)
        lines = []
        for p in self.states:
            for q in self.states:
                lines.append(f"{p:<{width}}  {q:<{width}}  {pretty(self.entries[(p, q)])}")
        return "\n".join(lines)


@dataclass
class SimConfig:
    K: int = DEFAULT_K
    global_vars: Tuple[str, ...] = ()
    check_invariants: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")


@dataclass
class SimStats:
    iterations: int = 0
    reactivations: int = 0  # counter decrements
    forced_false: int = 0


def _refs(a: DataAutomaton, names: Iterable[str], tag) -> List[VarRef]:
    return [VarRef(n, tag, a.sort(n)) for n in sorted(names)]


def _forall(solver, vs: List[VarRef], f: Formula) -> Formula:
    """Quantifier-free ``forall vs. f`` as ``not exists vs. not f``."""
    if not vs:
        return f
    try:
        return neg(solver.fm_eliminate(vs, nnf(neg(f), split=True)))
    except UnsupportedSort:
        from .formula import forall

        return forall(vs, f)


def _matching(a: DataAutomaton, j: str, event: str, l: str, R: SimMatrix) -> Formula:
    """``OR psi(x, x') & R[l][m](x')`` over the ``event``-rules of ``j``."""
    return disj([conj(r.guard, rename(R[(l, r.dst)], {PLAIN: PRIMED})) for r in a.rules_from(j, event)])


def presim(a: DataAutomaton, solver, event: str, i: str, j: str, l: str, R: SimMatrix, global_vars: Sequence[str] = ()) -> Formula:
    """Weakest condition on ``x`` under which every ``event``-move from ``i`` to
    ``l`` is matched by a move of ``j`` landing in ``R[l][.]``."""
    goal = _matching(a, j, event, l, R)
    out = []
    for r in a.rules_from(i, event):
        if r.dst != l:
            continue
        bad = conj(r.guard, neg(goal))
        e = neg(solver.fm_eliminate(_refs(a, a.vars, PRIMED), nnf(bad, split=True)))
        out.append(e)
    f = conj(out)
    gs = [g for g in global_vars if g in a.vars]
    if gs:
        f = _forall(solver, _refs(a, gs, PLAIN), f)
    return f


def _post(a: DataAutomaton, i: str, event: str) -> List[str]:
    return sorted({r.dst for r in a.rules_from(i, event)}, key=a.states.index)


def _pre(a: DataAutomaton, l: str, event: str) -> List[str]:
    return sorted({r.src for r in a.rules if r.event == event and r.dst == l}, key=a.states.index)


def _differing(solver, A: SimMatrix, B: SimMatrix, p: str) -> List[str]:
    """States ``q`` where entries ``(p, q)`` differ semantically."""
    return [q for q in A.states if not solver.equivalent(A[(p, q)], B[(p, q)])]


def compute_simulation(a: DataAutomaton, solver, config: Optional[SimConfig] = None, stats: Optional[SimStats] = None) -> SimMatrix:
    cfg = config or SimConfig()
    st = stats if stats is not None else SimStats()
    Q = a.states
    k = len(Q)
    prev = SimMatrix.filled(Q, TRUE)
    cnt = {(p, q): cfg.K for p in Q for q in Q}
    sim = SimMatrix.filled(Q, TRUE)
    for p in Q:
        for q in Q:
            if p in a.finals and q not in a.finals:
                sim[(p, q)] = FALSE
            else:
                sim[(p, q)] = conj(
                    [presim(a, solver, ev, p, q, l, prev, cfg.global_vars) for ev in a.alphabet for l in _post(a, p, ev)]
                )
    while True:
        if cfg.check_invariants:
            _check_inv1(solver, sim, prev)
            _check_inv2(a, solver, sim, prev)
        active = None
        for l in Q:
            if _differing(solver, sim, prev, l):
                active = l
                break
        if active is None:
            break
        l = active
        st.iterations += 1
        # predecessors are refined against this row; if the row itself changes
        # below (self-loops, forced bottom) it must stay active
        snapshot = {j: sim[(l, j)] for j in Q}
        for ev in a.alphabet:
            for i in _pre(a, l, ev):
                for j in Q:
                    sim[(i, j)] = conj(sim[(i, j)], presim(a, solver, ev, i, j, l, sim, cfg.global_vars))
        for j in _differing(solver, sim, prev, l):
            if cnt[(l, j)] == 0:
                sim[(l, j)] = FALSE
                st.forced_false += 1
            else:
                cnt[(l, j)] -= 1
                st.reactivations += 1
        for j in Q:
            prev[(l, j)] = snapshot[j]
        assert st.reactivations <= cfg.K * k * k
    return sim


def _check_inv1(solver, sim: SimMatrix, prev: SimMatrix):
    for key in sim.entries:
        assert solver.entails(sim[key], prev[key]), f"Sim does not refine PrevSim at {key}"


def _check_inv2(a: DataAutomaton, solver, sim: SimMatrix, prev: SimMatrix):
    for r in a.rules:
        for j in a.states:
            goal = _matching(a, j, r.event, r.dst, prev)
            bad = conj(sim[(r.src, j)], r.guard, neg(goal))
            assert not solver.is_sat(bad).sat, f"unmatched move {r.src}->{r.dst} against {j}"


def is_simulation(a: DataAutomaton, R: SimMatrix, solver) -> bool:
    for p in a.states:
        for q in a.states:
            if p in a.finals and q not in a.finals and solver.is_sat(R[(p, q)]).sat:
                return False
    for r in a.rules:
        for j in a.states:
            goal = _matching(a, j, r.event, r.dst, R)
            if solver.is_sat(conj(R[(r.src, j)], r.guard, neg(goal))).sat:
                return False
    return True


def check_assumption1(R: SimMatrix, global_refs: Sequence[VarRef], solver) -> bool:
    """No entry constrains the global variables."""
    gs = list(global_refs)
    for e in R.entries.values():
        if not solver.entails(solver.fm_eliminate(gs, e), e):
            return False
    return True


# ---------------------------------------------------------------------------
# Subsumption


def component_globals(net: Network, i: int) -> Tuple[str, ...]:
    c = net.components[i]
    return tuple(sorted(v for v in c.vars if v in set(net.globals) | set(net.params)))


def check_split(net: Network):
    """Variables shared by two components must be declared global."""
    owners: Dict[str, int] = {}
    for i, c in enumerate(net.components):
        for v in c.vars:
            if v in net.params or v in net.globals:
                continue
            if v in owners and owners[v] != i:
                raise SimulationError(f"variable {v!r} is shared by components but not declared global")
            owners[v] = i


@dataclass
class SimData:
    net_sims: List[SimMatrix]
    obs_sim: SimMatrix
    stats: List[SimStats] = field(default_factory=list)


def prepare_simulations(net: Network, obs: DataAutomaton, solver, K: int = DEFAULT_K, check: bool = True) -> SimData:
    check_split(net)
    sims = []
    stats = []
    for i, c in enumerate(net.components):
        g = component_globals(net, i)
        st = SimStats()
        R = compute_simulation(c, solver, SimConfig(K=K, global_vars=g), st)
        if check:
            assert is_simulation(c, R, solver), f"component {c.name}: not a simulation"
            assert check_assumption1(R, _refs(c, g, PLAIN), solver), f"component {c.name}: constrains globals"
        sims.append(R)
        stats.append(st)
    st = SimStats()
    ob = compute_simulation(obs, solver, SimConfig(K=K), st)
    if check:
        assert is_simulation(obs, ob, solver)
    stats.append(st)
    return SimData(sims, ob, stats)


def _same_enabled(c: DataAutomaton, q: str, r: str) -> bool:
    return all(bool(c.rules_from(q, e)) == bool(c.rules_from(r, e)) for e in c.alphabet)


def subsumes_sim(solver, s, t, data: SimData, net: Network) -> bool:
    """``s`` is subsumed by ``t`` through the precomputed simulations."""
    if len(s.qvec) != len(t.qvec):
        raise SimulationError("control vectors of different length")
    if not solver.entails(s.phi, t.phi):
        return False
    # equal states are related: a simulation joined with the identity is one too
    conds = []
    for i, (q, r) in enumerate(zip(s.qvec, t.qvec)):
        if q == r:
            continue
        c = net.components[i]
        # a component's participation decides which variables stay framed
        if not _same_enabled(c, q, r):
            return False
        conds.append(data.net_sims[i][(q, r)])
    conds.append(conj([TRUE if p in s.pset else disj([data.obs_sim[(p, q)] for q in sorted(s.pset)]) for p in sorted(t.pset)]))
    return solver.entails(s.phi, conj(conds))


def sim_subsumption(net: Network, obs: DataAutomaton, solver, K: int = DEFAULT_K) -> Callable:
    data = prepare_simulations(net, obs, solver, K)
    fn = lambda s, t: subsumes_sim(solver, s, t, data, net)
    fn.data = data
    return fn
