"""Generators and small utilities shared by the test modules."""

import shutil

from daut.automata import DataAutomaton, Rule
from daut.formula import (
    PLAIN,
    PRIMED,
    Atom,
    LinTerm,
    VarRef,
    atom,
    conj,
    disj,
    map_atoms,
)

Z3 = shutil.which("z3")


def v(name, tag=PLAIN):
    return LinTerm.of_var(VarRef(name, tag))


def c(k):
    return LinTerm.constant(k)


def tighten_int(f, int_vars):
    """Rewrite strict atoms over integer-valued terms as non-strict ones.

    Sound for comparing formulas on integer valuations: if the tightened
    forms are equivalent over the rationals they agree on all integers.
    """

    def fix(a: Atom):
        if a.rel != "<":
            return a
        if not all(x.base in int_vars and cf.denominator == 1 for x, cf in a.term.coeffs):
            return a
        if a.term.const.denominator != 1:
            return a
        return atom(a.term + c(1), "<=")

    return map_atoms(f, fix)


# -- random formulas ------------------------------------------------------

RELS = ("<", "<=", "=", "!=")


def random_atom(rng, names, consts=(0, 1), primed=True):
    tags = [PLAIN, PRIMED] if primed else [PLAIN]
    terms = [v(n, t) for n in names for t in tags]
    lhs = rng.choice(terms)
    kind = rng.random()
    if kind < 0.4:
        rhs = c(rng.choice(consts))
    elif kind < 0.75:
        rhs = rng.choice(terms)
    else:
        rhs = rng.choice(terms) + c(rng.choice(consts))
    return atom(lhs - rhs, rng.choice(RELS))


def random_guard(rng, names, consts=(0, 1), max_atoms=2, primed=True):
    parts = [random_atom(rng, names, consts, primed) for _ in range(rng.randint(0, max_atoms))]
    f = conj(parts)
    if rng.random() < 0.15:
        f = disj(f, random_atom(rng, names, consts, primed))
    return f


def random_automaton(rng, max_states=4, max_vars=2, max_events=2, consts=(0, 1), name="R", max_rules=None):
    k = rng.randint(1, max_states)
    states = [f"s{i}" for i in range(k)]
    names = ["x", "y"][: rng.randint(1, max_vars)]
    events = ["a", "b"][: rng.randint(1, max_events)]
    finals = [s for s in states if rng.random() < 0.5]
    n_rules = rng.randint(0, max_rules if max_rules is not None else 2 * k)
    rules = []
    for _ in range(n_rules):
        rules.append(Rule(rng.choice(states), rng.choice(events), random_guard(rng, names, consts), rng.choice(states)))
    return DataAutomaton(name, tuple(names), tuple(events), tuple(states), states[0], frozenset(finals), tuple(rules), {n: "rat" for n in names})


def random_suffix(rng, names=("x", "y"), max_len=3):
    """A random state formula and transition sequence (may be feasible)."""
    phi = conj([random_atom(rng, names, (0, 1, 2), primed=False) for _ in range(rng.randint(0, 2))])
    thetas = []
    for _ in range(rng.randint(1, max_len)):
        parts = [random_atom(rng, names, (0, 1, 2)) for _ in range(rng.randint(1, 3))]
        th = conj(parts)
        if rng.random() < 0.3:
            th = disj(th, random_atom(rng, names, (0, 1, 2)))
        thetas.append(th)
    return phi, thetas
