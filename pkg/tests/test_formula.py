from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from daut.formula import (
    FALSE,
    PLAIN,
    PRIMED,
    TRUE,
    And,
    BudgetExceeded,
    FormulaError,
    LinTerm,
    ParseError,
    VarRef,
    at_step,
    atom,
    cnf_clauses,
    conj,
    disj,
    dnf_cubes,
    edge_at,
    evaluate,
    exists,
    free_vars,
    neg,
    nnf,
    parse_formula,
    pretty,
    rename,
    shift,
    tidy,
    to_sexpr,
    unstep,
    var,
)

X, Y = VarRef("x"), VarRef("y")
XP = VarRef("x", PRIMED)


def lt(a, b):
    return atom(a - b, "<")


def tx(k=1):
    return LinTerm.of_var(X, k)


def ty(k=1):
    return LinTerm.of_var(Y, k)


# -- strategies -----------------------------------------------------------

small = st.integers(-3, 3)
terms = st.builds(lambda a, b, k: tx(a) + ty(b) + LinTerm.constant(k), small, small, small)
atoms = st.builds(atom, terms, st.sampled_from(["<", "<=", "=", "!="]))
formulas = st.recursive(
    atoms,
    lambda inner: st.one_of(
        st.builds(lambda a, b: conj(a, b), inner, inner),
        st.builds(lambda a, b: disj(a, b), inner, inner),
        st.builds(neg, inner),
    ),
    max_leaves=6,
)
vals = st.fixed_dictionaries({X: st.fractions(-4, 4, max_denominator=3), Y: st.fractions(-4, 4, max_denominator=3)})


# -- construction ----------------------------------------------------------


def test_var_names_roundtrip():
    for name in ["x", "x'", "x@3"]:
        assert var(name).name == name
    with pytest.raises(FormulaError):
        VarRef("x'")


def test_atom_folds_constants():
    assert atom(LinTerm.constant(-1), "<") == TRUE
    assert atom(LinTerm.constant(0), "<") == FALSE
    assert atom(LinTerm.constant(0), "=") == TRUE


def test_atoms_are_canonical_up_to_scaling():
    assert atom(tx(2) - ty(4), "<=") == atom(tx(1) - ty(2), "<=")
    # equalities are sign-normalised, inequalities are not
    assert atom(tx() - ty(), "=") == atom(ty() - tx(), "=")
    assert atom(tx() - ty(), "<") != atom(ty() - tx(), "<")


def test_conj_flattens_and_dedupes():
    a = lt(tx(), ty())
    f = conj(a, conj(a, TRUE))
    assert f == a
    assert conj(a, FALSE) == FALSE
    assert disj(a, TRUE) == TRUE
    assert isinstance(conj(a, lt(ty(), tx(1) + LinTerm.constant(3))), And)


def test_exists_drops_unused_vars():
    a = lt(tx(), LinTerm.constant(1))
    assert exists([Y], a) == a
    assert free_vars(exists([X], conj(a, lt(ty(), tx())))) == {Y}


def test_rename_by_tag_and_steps():
    f = atom(LinTerm.of_var(XP) - tx() - LinTerm.constant(1), "=")
    g = edge_at(f, 2)
    assert {v.name for v in free_vars(g)} == {"x@1", "x@2"}
    assert shift(g, 1) == edge_at(f, 3)
    assert unstep(at_step(lt(tx(), ty()), 4), 4) == lt(tx(), ty())
    with pytest.raises(FormulaError):
        rename(f, {PLAIN: PRIMED})  # would collide with x'
    with pytest.raises(FormulaError):
        rename(f, {PLAIN: 1, PRIMED: 1})


def test_tidy_merges_opposite_bounds():
    f = conj(atom(tx() - LinTerm.constant(1), "<="), atom(LinTerm.constant(1) - tx(), "<="))
    assert tidy(f) == atom(tx() - LinTerm.constant(1), "=")


# -- parsing and printing -----------------------------------------------------


def test_parse_examples():
    f = parse_formula("(and (<= 0 x) (< x D) (= x' (+ x 1)))")
    assert f == parse_formula(to_sexpr(f))
    assert "D" in pretty(f) and "x'" in pretty(f)
    assert parse_formula("(> x 2)") == parse_formula("(< 2 x)")
    assert parse_formula("(distinct x y)") == nnf(neg(parse_formula("(= x y)")))
    assert nnf(parse_formula("(=> (< x 0) false)")) == parse_formula("(<= 0 x)")
    assert parse_formula("(< (* 2 x) (/ y 2))") == atom(tx(4) - ty(), "<")


def test_let_is_inlined():
    f = parse_formula("(let ((a (+ x 1))) (< a y))")
    assert f == lt(tx() + LinTerm.constant(1), ty())


@pytest.mark.parametrize(
    "text",
    ["", "(and", "(< x)", "(* x y)", "(< x y) z", "(frob x)"],
)
def test_parse_errors(text):
    with pytest.raises((ParseError, FormulaError)):
        parse_formula(text)


def test_parse_error_position():
    with pytest.raises(ParseError) as e:
        parse_formula("(and\n  (< x 1)\n  (bogus y))")
    assert e.value.line == 3


def test_nonlinear_rejected():
    with pytest.raises(ParseError):
        parse_formula("(< (* x y) 1)")


def test_strict_reader_rejects_undeclared():
    with pytest.raises(ParseError):
        parse_formula("(< x z)", {"x": "rat"}, strict=True)


@settings(max_examples=150, deadline=None)
@given(formulas)
def test_sexpr_roundtrip(f):
    assert parse_formula(to_sexpr(f)) == f
    # the quoted dialect spells disequality as a negated equality
    assert nnf(parse_formula(to_sexpr(f, quote=True))) == nnf(f)


# -- normal forms ------------------------------------------------------------


@settings(max_examples=150, deadline=None)
@given(formulas, vals)
def test_nnf_preserves_truth(f, nu):
    assert evaluate(nnf(f), nu) == evaluate(f, nu)
    assert evaluate(nnf(f, split=True), nu) == evaluate(f, nu)


@settings(max_examples=150, deadline=None)
@given(formulas, vals)
def test_cnf_and_dnf_preserve_truth(f, nu):
    truth = evaluate(f, nu)
    clauses = cnf_clauses(f, budget=10_000)
    assert all(evaluate(c, nu) for c in clauses) == truth
    cubes = list(dnf_cubes(f))
    assert any(all(evaluate(a, nu) for a in cube) for cube in cubes) == truth


@settings(max_examples=100, deadline=None)
@given(formulas, vals)
def test_negation_flips_truth(f, nu):
    assert evaluate(neg(f), nu) == (not evaluate(f, nu))


def test_cnf_budget():
    f = disj([conj(lt(tx(), LinTerm.constant(i)), lt(ty(), LinTerm.constant(i))) for i in range(12)])
    with pytest.raises(BudgetExceeded):
        cnf_clauses(f, budget=100)


def test_dnf_splits_disequalities():
    cubes = list(dnf_cubes(atom(tx(), "!=")))
    assert len(cubes) == 2
    assert all(a.rel == "<" for cube in cubes for a in cube)


def test_evaluate_needs_total_valuation():
    with pytest.raises(FormulaError):
        evaluate(lt(tx(), ty()), {X: Fraction(0)})
