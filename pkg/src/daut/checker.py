"""Antichain-based abstraction refinement for trace inclusion.

The search unfolds the network paired with the complemented observer on
the fly.  Each node carries a product state ``(qvec, pset, phi)`` whose
formula is the conjunction of the predicates (from the predicate map) that
the concrete image entails.  Accepting successors are checked right away:
a feasible path is a counterexample, an infeasible one is refined by
interpolation and the subtree below the pivot is rebuilt.
"""

from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

from .automata import (
    DataAutomaton,
    Network,
    Trace,
    check_observer,
    product_successors,
    trace_restrict,
)
from .formula import (
    PLAIN,
    PRIMED,
    TRUE,
    BudgetExceeded,
    Const,
    Formula,
    at_step,
    cnf_clauses,
    conj,
    edge_at,
    exists,
    free_vars,
    pretty,
    rename,
)
from .solver import SolverError, validate_interpolant


# ---------------------------------------------------------------------------
# States, substates and predicate maps


@dataclass(frozen=True)
class ProductState:
    qvec: Tuple[str, ...]
    pset: FrozenSet[str]
    phi: Formula

    def control(self):
        return (self.qvec, self.pset)

    def __str__(self):
        return f"(<{','.join(self.qvec)}>, {{{','.join(sorted(self.pset))}}}, {pretty(self.phi)})"


@dataclass(frozen=True)
class Substate:
    indices: Tuple[int, ...]
    states: Tuple[str, ...]
    oset: FrozenSet[str]

    def matches(self, qvec: Sequence[str], pset: FrozenSet[str]) -> bool:
        """``self`` is a substate of ``(qvec, pset)``."""
        if any(qvec[i] != q for i, q in zip(self.indices, self.states)):
            return False
        return not self.oset or bool(self.oset & pset)

    def __str__(self):
        comps = ",".join(f"{i}:{q}" for i, q in zip(self.indices, self.states))
        return f"(<{comps}>, {{{','.join(sorted(self.oset))}}})"


class PredicateMap:
    """Substate-keyed predicate sets; only ever grows."""

    def __init__(self):
        self.entries: Dict[Substate, List[Formula]] = {}

    def add(self, key: Substate, pred: Formula) -> bool:
        preds = self.entries.setdefault(key, [])
        if pred in preds:
            return False
        preds.append(pred)
        return True

    def applicable(self, qvec, pset) -> List[Formula]:
        out: List[Formula] = []
        for key, preds in self.entries.items():
            if key.matches(qvec, pset):
                for p in preds:
                    if p not in out:
                        out.append(p)
        return out

    def __len__(self):
        return sum(len(v) for v in self.entries.values())

    def items(self):
        return self.entries.items()

    def copy(self) -> "PredicateMap":
        out = PredicateMap()
        out.entries = {k: list(v) for k, v in self.entries.items()}
        return out


def subsumes_img(solver, s: ProductState, t: ProductState) -> bool:
    """``s`` is subsumed by ``t``: same control vector, ``s.pset`` contains
    ``t.pset`` and ``s.phi`` entails ``t.phi``."""
    return s.qvec == t.qvec and s.pset >= t.pset and solver.entails(s.phi, t.phi)


def is_accepting(net: Network, obs: DataAutomaton, s) -> bool:
    qvec, pset = (s.qvec, s.pset) if isinstance(s, ProductState) else s
    return net.is_final(qvec) and not (set(pset) & obs.finals)


# ---------------------------------------------------------------------------
# Successors


def image(phi: Formula, theta: Formula, net: Network) -> Formula:
    """``exists x'. phi(x') & theta(x', x)``: states reachable in one step."""
    swapped = rename(theta, {PLAIN: PRIMED, PRIMED: PLAIN})
    return exists(net.var_refs(PRIMED), conj(rename(phi, {PLAIN: PRIMED}), swapped))


def post_concrete(net, obs, solver, s: ProductState):
    """``(event, theta, ProductState)`` with the exact (quantified) image."""
    out = []
    for ev in net.alphabet:
        for (rvec, pset), theta in product_successors(net, obs, s.qvec, s.pset, ev, solver):
            psi = image(s.phi, theta, net)
            if solver.is_sat(psi).sat:
                out.append((ev, theta, ProductState(rvec, pset, psi)))
    return out


def abstract_of(solver, pmap: PredicateMap, qvec, pset, psi: Formula) -> Formula:
    return conj([p for p in pmap.applicable(qvec, pset) if solver.entails(psi, p)])


def post_abstract(net, obs, solver, pmap: PredicateMap, s: ProductState, check: bool = False):
    out = []
    for ev, theta, t in post_concrete(net, obs, solver, s):
        sharp = abstract_of(solver, pmap, t.qvec, t.pset, t.phi)
        if check:
            assert solver.entails(t.phi, sharp)
        out.append((ev, theta, ProductState(t.qvec, t.pset, sharp)))
    return out


# ---------------------------------------------------------------------------
# Paths, pivots and refinement


def path_formula(thetas: Sequence[Formula]) -> Formula:
    return conj([edge_at(t, i + 1) for i, t in enumerate(thetas)])


def suffix_formula(phi_j: Formula, thetas: Sequence[Formula], j: int) -> Formula:
    """``phi_j`` at step 0 followed by ``thetas[j:]`` rebased to steps 1, 2, ..."""
    return conj([at_step(phi_j, 0)] + [edge_at(t, i + 1) for i, t in enumerate(thetas[j:])])


def pivot(solver, states: Sequence[ProductState], thetas: Sequence[Formula]) -> int:
    """Deepest ``j`` whose suffix from ``states[j]`` is infeasible, or -1."""
    k = len(thetas)
    if solver.is_sat(path_formula(thetas)).sat:
        return -1
    for j in range(k, -1, -1):
        if not solver.is_sat(suffix_formula(states[j].phi, thetas, j)).sat:
            return j
    return 0  # unreachable: j = 0 is the full path


def clause_substate(net: Network, obs: DataAutomaton, clause: Formula, qvec, pset) -> Substate:
    names = {v.base for v in free_vars(clause)}
    params = set(net.params)
    own = names - params
    idx = [i for i in range(len(net.components)) if set(net.components[i].vars) - params & own]
    if not idx and names & params:
        idx = list(range(len(net.components)))
    oset = frozenset(pset) if names & set(obs.vars) else frozenset()
    return Substate(tuple(idx), tuple(qvec[i] for i in idx), oset)


def refine(net, obs, solver, pmap: PredicateMap, states: Sequence[ProductState], thetas: Sequence[Formula], j: int, cnf_budget: int = 64):
    """Add the clauses of a sequence interpolant of the suffix from ``j``.

    Returns ``(interpolant sequence, number of new predicates)``.
    """
    seq = solver.seq_interpolant(states[j].phi, thetas[j:])
    added = 0
    for i, itp in enumerate(seq):
        st = states[j + i]
        try:
            clauses = cnf_clauses(itp, cnf_budget)
        except BudgetExceeded:
            clauses = [itp]
        for c in clauses:
            if isinstance(c, Const):
                continue
            key = clause_substate(net, obs, c, st.qvec, st.pset)
            if pmap.add(key, c):
                added += 1
    return seq, added


# ---------------------------------------------------------------------------
# Verdicts and configuration


@dataclass
class Included:
    stats: Dict[str, int] = field(default_factory=dict)
    word = "INCLUDED"


@dataclass
class Counterexample:
    trace: Trace
    events: Tuple[str, ...]
    full_trace: Trace
    relaxed: bool = False
    stats: Dict[str, int] = field(default_factory=dict)
    word = "COUNTEREXAMPLE"


@dataclass
class Inconclusive:
    reason: str
    stats: Dict[str, int] = field(default_factory=dict)
    word = "INCONCLUSIVE"


@dataclass
class RunConfig:
    search: str = "bfs"
    subsumption: str = "img"
    max_nodes: int = 100_000
    max_refinements: int = 10_000
    wall_ms: Optional[int] = None
    cnf_budget: int = 64
    check_invariants: bool = False
    validate_interpolants: bool = False


# ---------------------------------------------------------------------------
# The antichain tree


class Node:
    __slots__ = ("id", "pos", "state", "parent", "event", "theta", "children", "next_index", "status")

    def __init__(self, id, pos, state, parent, event, theta):
        self.id = id
        self.pos = pos
        self.state = state
        self.parent = parent
        self.event = event
        self.theta = theta
        self.children: List["Node"] = []
        self.next_index = 0
        self.status = "next"

    def path(self) -> List["Node"]:
        out = []
        n = self
        while n is not None:
            out.append(n)
            n = n.parent
        return out[::-1]

    def __repr__(self):
        return f"Node({'.'.join(map(str, self.pos)) or 'eps'}, {self.state})"


class Antichain:
    def __init__(self):
        self.nodes: Dict[int, Node] = {}
        self.subsume: Set[Tuple[int, int]] = set()
        self._ids = itertools.count()
        self.root: Optional[Node] = None

    def new_node(self, state, parent, event=None, theta=None) -> Node:
        if parent is None:
            pos = ()
        else:
            pos = parent.pos + (parent.next_index,)
            parent.next_index += 1
        n = Node(next(self._ids), pos, state, parent, event, theta)
        self.nodes[n.id] = n
        if parent is None:
            self.root = n
        else:
            parent.children.append(n)
        return n

    def subtree(self, n: Node) -> List[Node]:
        out = []
        stack = [n]
        while stack:
            m = stack.pop()
            out.append(m)
            stack.extend(m.children)
        return out

    def live(self, n: Node) -> bool:
        return n.id in self.nodes

    def visited(self):
        return [n for n in self.nodes.values() if n.status == "visited"]


def dump_antichain(tree: Optional[Antichain]) -> str:
    """DOT text: solid tree edges labeled by events, dashed subsumption edges."""
    lines = ["digraph antichain {", "  node [shape=box, fontname=monospace];"]
    if tree is not None and tree.root is not None:
        order = sorted(tree.nodes.values(), key=lambda n: n.pos)
        name = {n.id: "n" + ("_".join(map(str, n.pos)) or "root") for n in order}
        for n in order:
            label = str(n.state).replace('"', '\\"')
            style = ', style=dashed' if n.status == "next" else ""
            lines.append(f'  {name[n.id]} [label="{label}"{style}];')
        for n in order:
            if n.parent is not None and n.parent.id in name:
                lines.append(f'  {name[n.parent.id]} -> {name[n.id]} [label="{n.event}"];')
        for a, b in sorted(tree.subsume, key=lambda e: (tree.nodes[e[0]].pos, tree.nodes[e[1]].pos)):
            lines.append(f"  {name[a]} -> {name[b]} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Main loop


class Checker:
    """One run of the inclusion check; keeps its tree and predicate map
    around for inspection."""

    def __init__(self, net: Network, obs: DataAutomaton, solver, config: Optional[RunConfig] = None, subsumes: Optional[Callable] = None):
        check_observer(net, obs)
        self.net = net
        self.obs = obs
        self.solver = solver
        self.config = config or RunConfig()
        self.pmap = PredicateMap()
        self.tree = Antichain()
        self.subsumes = subsumes or (lambda s, t: subsumes_img(self.solver, s, t))
        self.stats = {"nodes_expanded": 0, "refinements": 0, "subsume_edges": 0}
        self.interpolants: List[tuple] = []
        self.subsumption_log: List[Tuple[ProductState, ProductState]] = []
        self.next: deque = deque()
        self._start = None

    # -- bookkeeping ----------------------------------------------------

    def _push(self, n: Node):
        n.status = "next"
        self.next.append(n)

    def _pop(self) -> Optional[Node]:
        while self.next:
            n = self.next.popleft() if self.config.search == "bfs" else self.next.pop()
            if self.tree.live(n) and n.status == "next":
                return n
        return None

    def _requeue(self, n: Node):
        if n.status == "visited":
            self.tree.subsume = {e for e in self.tree.subsume if e[0] != n.id}
            self._push(n)

    def _remove_subtrees(self, roots: Sequence[Node], keep: Set[int] = frozenset()):
        """Drop whole subtrees; sources of subsumption edges into them are
        re-queued."""
        gone: Set[int] = set()
        for r in roots:
            for m in self.tree.subtree(r):
                gone.add(m.id)
        requeue = [a for (a, b) in self.tree.subsume if b in gone and a not in gone]
        for r in roots:
            if r.parent is not None and r.parent.id not in gone:
                r.parent.children = [c for c in r.parent.children if c is not r]
        for i in gone:
            n = self.tree.nodes.pop(i)
            n.status = "removed"
        self.tree.subsume = {e for e in self.tree.subsume if e[0] not in gone and e[1] not in gone}
        for a in sorted(set(requeue)):
            self._requeue(self.tree.nodes[a])

    def _stats(self) -> Dict[str, int]:
        out = dict(self.stats)
        out["subsume_edges"] = len(self.tree.subsume)
        out["solver_queries"] = self.solver.stats.queries
        out["predicates"] = len(self.pmap)
        out["wall_ms"] = int((time.monotonic() - self._start) * 1000) if self._start else 0
        return out

    def _budget_hit(self) -> Optional[str]:
        c = self.config
        if self.stats["nodes_expanded"] >= c.max_nodes:
            return f"node budget {c.max_nodes} exhausted"
        if self.stats["refinements"] >= c.max_refinements:
            return f"refinement budget {c.max_refinements} exhausted"
        if c.wall_ms is not None and (time.monotonic() - self._start) * 1000 > c.wall_ms:
            return f"time budget {c.wall_ms} ms exhausted"
        return None

    # -- run ------------------------------------------------------------

    def run(self):
        self._start = time.monotonic()
        try:
            return self._run()
        except (SolverError, BudgetExceeded) as e:
            return Inconclusive(f"solver failure: {e}", self._stats())

    def _run(self):
        net, obs = self.net, self.obs
        root_state = ProductState(net.initial, frozenset([obs.initial]), TRUE)
        if is_accepting(net, obs, root_state):
            return self._counterexample([root_state], [], [])
        root = self.tree.new_node(root_state, None)
        self._push(root)
        while True:
            if self.config.check_invariants:
                self.check_closed()
            curr = self._pop()
            if curr is None:
                return Included(self._stats())
            why = self._budget_hit()
            if why:
                return Inconclusive(why, self._stats())
            curr.status = "visited"
            out = self._expand(curr)
            if out is not None:
                return out

    def _expand(self, curr: Node):
        self.stats["nodes_expanded"] += 1
        existing = {(c.event, c.state) for c in curr.children}
        succs = post_abstract(self.net, self.obs, self.solver, self.pmap, curr.state, check=self.config.check_invariants)
        for ev, theta, t in succs:
            if is_accepting(self.net, self.obs, t):
                res = self._accepting(curr, ev, theta, t)
                if res is None:
                    return None  # refined; curr is gone or re-queued
                return res
            if (ev, t) in existing:
                continue
            hit = self._find_subsumer(t)
            if hit is not None:
                self.tree.subsume.add((curr.id, hit.id))
                self.subsumption_log.append((t, hit.state))
                continue
            ancestors = {n.id for n in curr.path()}
            rem = [
                n
                for n in self.tree.nodes.values()
                if n.status == "next"
                and n.id not in ancestors
                and self.subsumes(n.state, t)
                and not self.subsumes(t, n.state)
            ]
            succ = self.tree.new_node(t, curr, ev, theta)
            if rem:
                rem_ids = {n.id for n in rem}
                for n in rem:
                    if n.parent is not None and n.parent.status == "visited" and n.parent.id not in rem_ids:
                        self.tree.subsume.add((n.parent.id, succ.id))
                for a, b in list(self.tree.subsume):
                    if b in rem_ids and a not in rem_ids:
                        self.tree.subsume.add((a, succ.id))
                self._remove_subtrees(rem)
            self._push(succ)
        return None

    def _find_subsumer(self, t: ProductState) -> Optional[Node]:
        for n in self.tree.nodes.values():
            if n.status == "visited" and self.subsumes(t, n.state):
                return n
        return None

    def _accepting(self, curr: Node, ev, theta, t: ProductState):
        path = curr.path()
        states = [n.state for n in path] + [t]
        thetas = [n.theta for n in path[1:]] + [theta]
        events = [n.event for n in path[1:]] + [ev]
        j = pivot(self.solver, states, thetas)
        if j < 0:
            return self._counterexample(states, thetas, events)
        if self.stats["refinements"] >= self.config.max_refinements:
            return Inconclusive(f"refinement budget {self.config.max_refinements} exhausted", self._stats())
        seq, added = refine(self.net, self.obs, self.solver, self.pmap, states, thetas, j, self.config.cnf_budget)
        self.stats["refinements"] += 1
        self.interpolants.append((states[j].phi, tuple(thetas[j:]), tuple(seq)))
        if self.config.validate_interpolants:
            assert validate_interpolant(self.solver, states[j].phi, thetas[j:], seq), "invalid interpolant"
        piv = path[j]
        # rebuild everything below the pivot with the refined map
        self._remove_subtrees(list(piv.children))
        self.tree.subsume = {e for e in self.tree.subsume if e[0] != piv.id}
        self._push(piv)
        return None

    def _counterexample(self, states, thetas, events):
        from .oracle import concrete_trace, trace_membership

        full, relaxed = concrete_trace(self.net, self.solver, thetas, events)
        w = trace_restrict(full, self.obs.vars)
        if not relaxed:
            if not trace_membership(self.net, w, self.solver) or trace_membership(self.obs, w):
                return Inconclusive("extracted counterexample failed validation", self._stats())
        return Counterexample(w, tuple(events), full, relaxed, self._stats())

    # -- test-build checks ----------------------------------------------

    def check_closed(self):
        """Every visited node's abstract successors are children or are
        covered by a subsumption edge to a live node."""
        for n in self.tree.visited():
            # predicates only grow, so older children stay valid covers
            targets = [self.tree.nodes[b].state for (a, b) in self.tree.subsume if a == n.id and b in self.tree.nodes]
            targets += [c.state for c in n.children]
            for ev, theta, t in post_abstract(self.net, self.obs, self.solver, self.pmap, n.state):
                if is_accepting(self.net, self.obs, t):
                    continue
                assert any(self.subsumes(t, m) for m in targets), f"{n} has an uncovered successor {t}"


def run(net: Network, obs: DataAutomaton, solver, config: Optional[RunConfig] = None, subsumes=None):
    return Checker(net, obs, solver, config, subsumes).run()
