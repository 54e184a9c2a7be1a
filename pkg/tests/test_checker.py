import random
import re

import pytest

from helpers import random_automaton
from daut.automata import DataAutomaton, Network
from daut.checker import (
    Antichain,
    Checker,
    Counterexample,
    Included,
    Inconclusive,
    PredicateMap,
    ProductState,
    RunConfig,
    Substate,
    clause_substate,
    dump_antichain,
    is_accepting,
    path_formula,
    pivot,
    post_abstract,
    post_concrete,
    refine,
    run,
    subsumes_img,
    suffix_formula,
)
from daut.formula import FALSE, TRUE, free_vars, parse_formula as P
from daut.oracle import count_runs, trace_membership
from daut.solver import BuiltinSolver, validate_interpolant

Q11 = ("q1", "q1")


def fs(*xs):
    return frozenset(xs)


def ps(qvec, pset, phi=TRUE):
    return ProductState(tuple(qvec), fs(*pset), phi)


# The path of the worked example: init, a2, a2 ending with the observer lost.
TH1 = P("(and (= v' 1) (= x' 0) (< 0 D'))")
TH2 = P("(and (= v' (+ v 1)) (= D' D) (= v' 2) (= x' (+ x 1)) (<= D x) (< x (* 2 D)) (not (= v' v)))")
TH3 = P("(and (= v' 2) (= D' D) (= x' (+ x 1)) (<= D x) (< x (* 2 D)) (not (= v' v)))")
RHO_STATES = [ps(("q0", "q0"), ["p0"]), ps(Q11, ["p1"], P("(= v 1)")), ps(Q11, ["p2"], P("(< D x)")), ps(Q11, [], P("(< D x)"))]
RHO_THETAS = [TH1, TH2, TH3]


def example_map():
    pm = PredicateMap()
    pm.add(Substate((0, 1), Q11, fs("p1")), P("(= v 1)"))
    pm.add(Substate((0, 1), Q11, fs("p2")), P("(< D x)"))
    pm.add(Substate((0, 1), Q11, fs("p2")), P("(= v 2)"))
    return pm


# -- predicate maps and substates ------------------------------------------------


def test_substate_matching():
    s = Substate((1,), ("q1",), fs("p2"))
    assert s.matches(("q0", "q1"), fs("p1", "p2"))
    assert not s.matches(("q0", "q0"), fs("p2"))
    assert not s.matches(("q0", "q1"), fs("p1"))
    assert Substate((), (), fs()).matches(("a",), fs())


def test_predicate_map_applicable():
    pm = example_map()
    assert len(pm) == 3
    assert not pm.add(Substate((0, 1), Q11, fs("p1")), P("(= v 1)"))
    assert pm.applicable(Q11, fs("p2")) == [P("(< D x)"), P("(= v 2)")]
    assert pm.applicable(Q11, fs()) == []
    c = pm.copy()
    c.add(Substate((), (), fs()), P("(< 0 D)"))
    assert len(pm) == 3 and len(c) == 4


def test_clause_substate(running2):
    net, obs = running2.network, running2.observer
    assert clause_substate(net, obs, P("(= v 1)"), Q11, fs("p1")) == Substate((0, 1), Q11, fs("p1"))
    assert clause_substate(net, obs, P("(< D x)"), Q11, fs("p2")) == Substate((0, 1), Q11, fs())
    # a clause over parameters only is attached to every component
    assert clause_substate(net, obs, P("(< 0 D)"), Q11, fs("p2")) == Substate((0, 1), Q11, fs())


# -- successors -------------------------------------------------------------------------


def test_post_concrete_example(running2, solver):
    net, obs = running2.network, running2.observer
    s = ps(Q11, ["p1"], P("(= v 1)"))
    out = {(ev, t.pset): t for ev, _, t in post_concrete(net, obs, solver, s)}
    psi1 = out[("a1", fs("p1"))].phi
    psi2 = out[("a2", fs("p2"))].phi
    assert solver.entails(psi1, P("(= v 1)"))
    assert solver.entails(psi2, P("(= v 2)")) and solver.entails(psi2, P("(< D x)"))
    assert solver.equivalent(psi1, P("(and (= v 1) (<= 1 x) (< x (+ D 1)))"))


def test_post_concrete_drops_empty_after_init(running2, solver):
    root = ps(("q0", "q0"), ["p0"])
    out = post_concrete(running2.network, running2.observer, solver, root)
    assert [t.pset for _, _, t in out] == [fs("p1")]


def test_post_abstract_example(running2, solver):
    net, obs = running2.network, running2.observer
    s = ps(Q11, ["p1"], P("(= v 1)"))
    out = {(ev, t.pset): t.phi for ev, _, t in post_abstract(net, obs, solver, example_map(), s, check=True)}
    assert out[("a1", fs("p1"))] == P("(= v 1)")
    assert solver.equivalent(out[("a2", fs("p2"))], P("(and (= v 2) (< D x))"))
    assert ("a2", fs()) not in out  # v=1 forces the observer to p2
    assert all(t.phi == TRUE for _, _, t in post_abstract(net, obs, solver, PredicateMap(), s))


def test_no_enabled_event(solver):
    a = DataAutomaton("A", ("x",), ("e",), ("s",), "s", [], [])
    b = DataAutomaton("B", ("x",), ("e",), ("p",), "p", ["p"], [])
    assert post_concrete(Network((a,)), b, solver, ps(("s",), ["p"])) == []


def test_is_accepting(running2):
    net, obs = running2.network, running2.observer
    assert is_accepting(net, obs, ps(Q11, []))
    assert not is_accepting(net, obs, ps(Q11, ["p1"]))
    assert not is_accepting(net, obs, ps(("q0", "q0"), []))


# -- path formulas, pivots, interpolants ---------------------------------------------


def test_path_formula_shape():
    assert path_formula([]) == TRUE
    f = path_formula(RHO_THETAS)
    steps = {v.tag for v in free_vars(f)}
    # the first edge only constrains its target step
    assert steps == {1, 2, 3}
    assert suffix_formula(TRUE, RHO_THETAS, 0) == f


def test_worked_example_pivot(solver):
    assert not solver.is_sat(path_formula(RHO_THETAS)).sat
    assert not solver.is_sat(suffix_formula(TRUE, RHO_THETAS, 1)).sat
    assert not solver.is_sat(suffix_formula(RHO_STATES[1].phi, RHO_THETAS, 1)).sat
    assert solver.is_sat(suffix_formula(RHO_STATES[2].phi, RHO_THETAS, 2)).sat
    assert pivot(solver, RHO_STATES, RHO_THETAS) == 1


def test_worked_example_interpolant(solver):
    suffix = RHO_THETAS[1:]
    assert validate_interpolant(solver, TRUE, suffix, [TRUE, P("(= v 2)"), FALSE])
    assert not validate_interpolant(solver, TRUE, suffix, [TRUE, TRUE, FALSE])
    seq = solver.seq_interpolant(TRUE, suffix)
    assert validate_interpolant(solver, TRUE, suffix, seq)
    assert validate_interpolant(solver, FALSE, [], [FALSE])
    assert solver.seq_interpolant(FALSE, []) == [FALSE]


def test_first_spurious_path_has_pivot_zero(running2, solver):
    net, obs = running2.network, running2.observer
    root = ps(("q0", "q0"), ["p0"])
    (_, th_init, s1), = post_abstract(net, obs, solver, PredicateMap(), root)
    th_a1, s2 = [(th, t) for ev, th, t in post_abstract(net, obs, solver, PredicateMap(), s1) if ev == "a1" and not t.pset][0]
    states, thetas = [root, s1, s2], [th_init, th_a1]
    assert pivot(solver, states, thetas) == 0
    pm = PredicateMap()
    seq, added = refine(net, obs, solver, pm, states, thetas, 0)
    assert added >= 1
    assert solver.entails(P("(and (= x 0) (= v 1) (= D D))"), seq[1])
    assert not solver.is_sat(suffix_formula(seq[1], thetas, 1)).sat
    # progress: the refined map no longer lets the spurious successor appear
    s1r = [t for _, _, t in post_abstract(net, obs, solver, pm, root)][0]
    bad = [t for ev, _, t in post_abstract(net, obs, solver, pm, s1r) if ev == "a1" and not t.pset]
    assert not bad or not solver.is_sat(suffix_formula(s1r.phi, [th_a1], 0)).sat


def test_pivot_feasible_path(running2_bad, solver):
    thetas = [P("(and (= v' 1) (= x' 0))"), P("(and (= v' 2) (= x' (+ x 1)))")]
    states = [ps(("q0", "q0"), ["p0"]), ps(Q11, ["p1"]), ps(Q11, [])]
    assert pivot(solver, states, thetas) == -1


def test_subsumes_img(solver):
    s = ps(Q11, ["p1"], P("(= v 1)"))
    assert subsumes_img(solver, s, s)
    assert subsumes_img(solver, ps(Q11, ["p1", "p2"], P("(= v 1)")), s)
    assert not subsumes_img(solver, s, ps(Q11, ["p1", "p2"], P("(= v 1)")))
    assert not subsumes_img(solver, ps(("q0", "q1"), ["p1"], P("(= v 1)")), s)
    assert subsumes_img(solver, ps(Q11, ["p1"], P("(and (= v 1) (< x 0))")), s)


# -- whole runs -------------------------------------------------------------------------


def test_running2_included(running2, solver):
    chk = Checker(running2.network, running2.observer, solver, RunConfig(check_invariants=True, validate_interpolants=True))
    res = chk.run()
    assert isinstance(res, Included)
    assert res.stats["refinements"] >= 1
    for phi, thetas, seq in chk.interpolants:
        assert validate_interpolant(solver, phi, thetas, seq)


def test_running2_dfs(running2, solver):
    res = run(running2.network, running2.observer, solver, RunConfig(search="dfs", check_invariants=True))
    assert isinstance(res, Included)


def test_mutated_counterexample(running2_bad, solver):
    net, obs = running2_bad.network, running2_bad.observer
    res = run(net, obs, solver)
    assert isinstance(res, Counterexample)
    assert res.events[0] == "init" and "a2" in res.events
    assert res.trace.valuation(1)["v"] == 1
    assert trace_membership(net, res.trace, solver)
    assert not trace_membership(obs, res.trace)
    assert not res.relaxed


def test_empty_language_component(running2, solver):
    a = DataAutomaton("E", ("v",), ("init",), ("s", "t"), "s", ["t"], [])
    res = run(Network((a,)), running2.observer, solver)
    assert isinstance(res, Included)


def test_root_accepting_gives_empty_trace(solver):
    a = DataAutomaton("A", ("v",), ("e",), ("s",), "s", ["s"], [])
    b = DataAutomaton("B", ("v",), ("e",), ("p",), "p", [], [])
    res = run(Network((a,)), b, solver)
    assert isinstance(res, Counterexample)
    assert len(res.trace) == 0 and res.trace.domain == ("v",)


@pytest.mark.parametrize("cfg", [RunConfig(max_nodes=2), RunConfig(max_refinements=1), RunConfig(wall_ms=1)])
def test_budgets_are_inconclusive(running3_model, solver, cfg):
    res = run(running3_model.network, running3_model.observer, solver, cfg)
    assert isinstance(res, Inconclusive)
    assert "budget" in res.reason


def test_solver_failure_is_inconclusive(running2):
    res = run(running2.network, running2.observer, BuiltinSolver(cube_budget=1))
    assert isinstance(res, Inconclusive) and "solver" in res.reason


def test_dump_antichain(running2, solver):
    assert dump_antichain(Antichain()) == "digraph antichain {\n  node [shape=box, fontname=monospace];\n}\n"
    chk = Checker(running2.network, running2.observer, solver)
    chk.run()
    dot = dump_antichain(chk.tree)
    assert dot.startswith("digraph antichain {") and dot.rstrip().endswith("}")
    assert "nroot" in dot
    assert re.search(r'-> n\S+ \[label="init"\]', dot)
    assert dot == dump_antichain(chk.tree)
    one = Antichain()
    one.new_node(ps(("q0",), ["p0"]), None)
    assert dump_antichain(one).count("[label=") == 1


# -- random networks against the bounded oracle ------------------------------------------


def test_random_single_component_runs(solver):
    from daut.oracle import bounded_emptiness

    rng = random.Random(11)
    checked = 0
    for _ in range(25):
        a = random_automaton(rng, max_states=3, max_vars=1, max_events=2, name="A")
        b = random_automaton(rng, max_states=2, max_vars=1, max_events=2, name="B")
        b = DataAutomaton("B", a.vars, a.alphabet, b.states, b.initial, b.finals, [r for r in b.rules if r.event in a.alphabet])
        res = run(Network((a,)), b, solver, RunConfig(max_nodes=400, check_invariants=True, validate_interpolants=True))
        if isinstance(res, Inconclusive):
            continue
        checked += 1
        bounded = bounded_emptiness(Network((a,)), b, 3, solver)
        if isinstance(res, Included):
            assert not bounded.found
        else:
            assert trace_membership(b, res.trace) is False
            assert count_runs(a, res.full_trace) > 0
    assert checked >= 15
