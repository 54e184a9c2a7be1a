import random

import pytest

from helpers import random_automaton
from daut.automata import DataAutomaton, Network, Rule
from daut.checker import ProductState, subsumes_img
from daut.formula import FALSE, TRUE, VarRef, parse_formula as P
from daut.simulation import (
    SimConfig,
    SimData,
    SimMatrix,
    SimStats,
    SimulationError,
    check_assumption1,
    check_split,
    compute_simulation,
    is_simulation,
    presim,
    prepare_simulations,
    subsumes_sim,
)


def fs(*xs):
    return frozenset(xs)


def test_presim_examples(running2, solver):
    b = running2.observer
    top = SimMatrix.filled(b.states, TRUE)
    # p1's a2 self-loop is matched by p1's own a2 self-loop
    assert solver.equivalent(presim(b, solver, "a2", "p1", "p1", "p1", top), TRUE)
    # p2 cannot match p1's a1 move at all: it has no a1 rules
    f = presim(b, solver, "a1", "p1", "p2", "p1", top)
    assert solver.equivalent(f, FALSE)
    a = DataAutomaton("A", ("x",), ("e",), ("s", "t"), "s", [], [Rule("s", "e", P("(and (< x 0) (< 0 x))"), "t")])
    assert solver.equivalent(presim(a, solver, "e", "s", "t", "t", SimMatrix.filled(a.states, TRUE)), TRUE)


def test_presim_without_peer_rules(solver):
    a = DataAutomaton("A", ("x",), ("e",), ("s", "t"), "s", [], [Rule("s", "e", P("(< x x')"), "t")])
    f = presim(a, solver, "e", "s", "t", "t", SimMatrix.filled(a.states, TRUE))
    # forall x'. not (x < x') has no solutions over the rationals
    assert solver.equivalent(f, FALSE)
    g = DataAutomaton("A", ("x",), ("e",), ("s", "t"), "s", [], [Rule("s", "e", P("(and (< x 0) (= x' x))"), "t")])
    assert solver.equivalent(presim(g, solver, "e", "s", "t", "t", SimMatrix.filled(g.states, TRUE)), P("(<= 0 x)"))


def test_observer_simulation(running2, solver):
    b = running2.observer
    st = SimStats()
    R = compute_simulation(b, solver, SimConfig(check_invariants=True), st)
    assert is_simulation(b, R, solver)
    assert solver.equivalent(R[("p2", "p1")], TRUE)  # p1 simulates p2
    assert solver.equivalent(R[("p1", "p2")], FALSE)
    for p in b.states:
        assert solver.equivalent(R[(p, p)], TRUE)
    assert st.reactivations <= 3 * len(b.states) ** 2


def test_no_rules_matrix(solver):
    a = DataAutomaton("A", ("x",), ("e",), ("s", "f"), "s", ["f"], [])
    R = compute_simulation(a, solver)
    assert R.entries == {("s", "s"): TRUE, ("s", "f"): TRUE, ("f", "s"): FALSE, ("f", "f"): TRUE}


def test_identity_and_top_matrices(solver):
    rng = random.Random(5)
    for _ in range(10):
        a = random_automaton(rng)
        assert is_simulation(a, SimMatrix.identity(a.states), solver)
    sink = DataAutomaton("S", ("x",), ("e",), ("f", "n"), "f", ["f"], [Rule("f", "e", TRUE, "f"), Rule("n", "e", TRUE, "n")])
    assert not is_simulation(sink, SimMatrix.filled(sink.states, TRUE), solver)


def test_k_one_stress(solver):
    rng = random.Random(9)
    forced = 0
    for _ in range(15):
        a = random_automaton(rng, max_states=4, max_rules=8)
        st = SimStats()
        R = compute_simulation(a, solver, SimConfig(K=1, check_invariants=True), st)
        assert is_simulation(a, R, solver)
        assert st.reactivations <= len(a.states) ** 2
        forced += st.forced_false
    assert forced > 0  # the budget actually bites on this sample


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(K=0)


def test_matrix_format():
    m = SimMatrix.identity(["p", "qq"])
    assert m.format().splitlines()[0] == "p   p   true"
    assert m.row("qq") == [FALSE, TRUE]


def test_assumption1(solver):
    R = SimMatrix.filled(["a"], P("(= v 1)"))
    v = VarRef("v")
    assert not check_assumption1(R, [v], solver)
    assert check_assumption1(SimMatrix.filled(["a"], P("(< y 0)")), [v], solver)
    assert check_assumption1(R, [], solver)


def test_global_abstraction_satisfies_assumption1(solver):
    a = DataAutomaton("A", ("g", "y"), ("e",), ("s", "t"), "s", ["s", "t"], [Rule("s", "e", P("(and (< y g) (= y' y))"), "t"), Rule("t", "e", P("(= y' y)"), "t")])
    R = compute_simulation(a, solver, SimConfig(global_vars=("g",)))
    assert check_assumption1(R, [VarRef("g")], solver)
    assert is_simulation(a, R, solver)


def test_split_must_be_declared(running2):
    net = running2.network
    undeclared = Network(net.components, params=net.params, globals=())
    with pytest.raises(SimulationError):
        check_split(undeclared)
    check_split(net)


def _identity_data(net, obs):
    return SimData([SimMatrix.identity(c.states) for c in net.components], SimMatrix.identity(obs.states))


def test_identity_sims_reduce_to_img(running2, solver):
    net, obs = running2.network, running2.observer
    data = _identity_data(net, obs)
    phis = [TRUE, P("(= v 1)"), P("(and (= v 1) (< x 0))"), P("(< D x)")]
    qvecs = [("q0", "q0"), ("q1", "q1"), ("q0", "q1")]
    psets = [fs(), fs("p1"), fs("p1", "p2"), fs("p2")]
    rng = random.Random(1)
    for _ in range(60):
        s = ProductState(rng.choice(qvecs), rng.choice(psets), rng.choice(phis))
        t = ProductState(rng.choice(qvecs), rng.choice(psets), rng.choice(phis))
        assert subsumes_sim(solver, s, t, data, net) == subsumes_img(solver, s, t)


def test_observer_clause(running2, solver):
    net, obs = running2.network, running2.observer
    data = prepare_simulations(net, obs, solver)
    s = ProductState(("q1", "q1"), fs("p1", "p2"), P("(= v 1)"))
    t = ProductState(("q1", "q1"), fs("p1"), P("(= v 1)"))
    assert subsumes_sim(solver, s, t, data, net)
    # p1 simulates p2, so a state holding p1 covers one holding p2
    u = ProductState(("q1", "q1"), fs("p1"), TRUE)
    w = ProductState(("q1", "q1"), fs("p2"), TRUE)
    assert subsumes_sim(solver, u, w, data, net)
    assert not subsumes_img(solver, u, w)
    assert not subsumes_sim(solver, w, u, data, net)
    with pytest.raises(SimulationError):
        subsumes_sim(solver, s, ProductState(("q1",), fs(), TRUE), data, net)


def test_self_loop_row_stays_active(solver):
    # s2 is its own predecessor: refining row s2 changes row s2, and the
    # rows that depended on the old value must be revisited
    rules = [
        Rule("s2", "a", TRUE, "s2"),
        Rule("s2", "a", P("(<= x y')"), "s1"),
        Rule("s0", "a", P("(distinct x 1)"), "s0"),
        Rule("s0", "a", TRUE, "s1"),
        Rule("s2", "a", P("(and (< y (+ x 1)) (= x 0))"), "s0"),
        Rule("s1", "a", TRUE, "s1"),
    ]
    a = DataAutomaton("R", ("x", "y"), ("a",), ("s0", "s1", "s2"), "s0", ["s0", "s2"], rules)
    R = compute_simulation(a, solver, SimConfig(check_invariants=True))
    assert is_simulation(a, R, solver)
    # s0 cannot follow s2's unconstrained loop once x' = 1
    assert solver.equivalent(R[("s2", "s0")], FALSE)
