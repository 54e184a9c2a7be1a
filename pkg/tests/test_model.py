import pytest

from daut.formula import parse_formula as P
from daut.model import ModelError, format_model, load_model, parse_model

SMALL = """
param D : rat;
automaton A {
  vars x;
  alphabet e;
  init q;
  final q;
  q -> q : e, (and (< x D) (= x' (+ x 1)));
}
observer B {
  vars x;
  alphabet e;
  init p;
  final p;
  p -> p : e, (< x x');
}
"""


def test_parse_small():
    m = parse_model(SMALL)
    (a,) = m.network.components
    assert a.vars == ("x", "D")
    assert m.network.params == {"D": "rat"}
    assert m.observer.vars == ("x",)
    assert a.rules[0].guard == P("(and (< x D) (= x' (+ x 1)))")


def test_running_models_load(models_dir):
    for name in ["running2", "running3", "running4", "running2-bad"]:
        m = load_model(str(models_dir / f"{name}.da"))
        assert set(m.network.globals) == {"x", "v"}
        assert m.observer.name == "B"
    m = load_model(str(models_dir / "running4.da"))
    assert len(m.network.components) == 4


def test_roundtrip(models_dir):
    for name in ["running2", "running3"]:
        m = load_model(str(models_dir / f"{name}.da"))
        text = format_model(m)
        m2 = parse_model(text)
        assert format_model(m2) == text
        assert [r.guard for c in m2.network.components for r in c.rules] == [r.guard for c in m.network.components for r in c.rules]


@pytest.mark.parametrize(
    "text, where",
    [
        ("", (1, 1)),
        ("  # only a comment\n", (1, 1)),
        ("param D : real;", (1, 11)),
        ("bogus", (1, 1)),
    ],
)
def test_error_positions(text, where):
    with pytest.raises(ModelError) as e:
        parse_model(text)
    assert (e.value.line, e.value.col) == where


@pytest.mark.parametrize(
    "patch, needle",
    [
        (("(< x x')", "(< y x')"), "undeclared"),
        (("alphabet e;\n  init p;", "alphabet f;\n  init p;"), "alphabet"),
        (("automaton A", "automaton and"), ""),
        (("init q;", ""), "initial"),
        (("observer B", "observer A"), "unique"),
    ],
)
def test_semantic_errors(patch, needle):
    old, new = patch
    assert old in SMALL
    with pytest.raises(ModelError) as e:
        parse_model(SMALL.replace(old, new, 1))
    assert needle in str(e.value)


def test_missing_file():
    with pytest.raises(ModelError):
        load_model("/nonexistent/model.da")


def test_observer_must_use_network_vars():
    text = SMALL.replace("vars x;\n  alphabet e;\n  init p;", "vars w;\n  alphabet e;\n  init p;").replace("(< x x')", "(< w w')")
    with pytest.raises(ModelError) as e:
        parse_model(text)
    assert "w" in str(e.value)
