"""Text format for networks and observers.

::

    # comment
    param D : rat;
    globals v;
    automaton A1 {
      vars x, v : rat;
      alphabet init, a1;
      init q0;
      final q1;
      q0 -> q1 : init, (and (= x' 0) (= v' 1));
    }
    observer B { ... same body ... }

Parameters are added to every component's vocabulary and never change.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .automata import AutomatonError, DataAutomaton, Network, Rule, check_observer
from .formula import INT, RAT, FormulaReader, ParseError, read_sexpr, to_sexpr

# words that would be misread inside formulas
KEYWORDS = {"true", "false", "and", "or", "not", "exists", "forall", "let", "distinct", "implies", "to_real"}
SORT_NAMES = {"rat": RAT, "int": INT}

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_LEX = re.compile(r"(#[^\n]*)|(\s+)|(->)|([(){};,:])|([^\s(){};,:#]+)")


class ModelError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}" if line else msg)
        self.msg = msg
        self.line = line
        self.col = col


@dataclass
class Model:
    network: Network
    observer: DataAutomaton


def _lex(text: str) -> List[Tuple[str, int, int]]:
    out = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _LEX.match(text, pos)
        if not m:
            raise ModelError(f"unexpected character {text[pos]!r}", line, col)
        tok = m.group(0)
        if m.group(1) is None and m.group(2) is None:
            out.append((tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0
        self.end = (len(text.splitlines()) or 1, 1)

    def peek(self) -> Optional[str]:
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def peek2(self) -> Optional[str]:
        return self.toks[self.i + 1][0] if self.i + 1 < len(self.toks) else None

    def where(self):
        if self.i < len(self.toks):
            return self.toks[self.i][1:]
        if self.toks:
            return self.toks[-1][1:]
        return (1, 1)

    def fail(self, msg):
        raise ModelError(msg, *self.where())

    def take(self, expect: Optional[str] = None, what: Optional[str] = None) -> str:
        if self.i >= len(self.toks):
            self.fail(f"unexpected end of input, expected {what or (repr(expect) if expect else 'more input')}")
        tok = self.toks[self.i][0]
        if expect is not None and tok != expect:
            self.fail(f"expected {expect!r}, got {tok!r}")
        self.i += 1
        return tok

    def ident(self, what: str) -> str:
        tok = self.take(what=what)
        if not _IDENT.match(tok):
            self.i -= 1
            self.fail(f"expected {what}, got {tok!r}")
        if tok in KEYWORDS:
            self.i -= 1
            self.fail(f"{tok!r} is a reserved name")
        return tok

    def ident_list(self, what: str) -> List[str]:
        out = [self.ident(what)]
        while self.peek() == ",":
            self.take(",")
            out.append(self.ident(what))
        return out

    def formula_tokens(self):
        if self.peek() in ("true", "false"):
            self.i += 1
            return [self.toks[self.i - 1]]
        if self.peek() != "(":
            self.fail("expected a formula")
        depth = 0
        start = self.i
        while True:
            tok = self.take(what="')'")
            if tok == "(":
                depth += 1
            elif tok == ")":
                depth -= 1
                if depth == 0:
                    break
            elif tok in ("{", "}", ";", ",", ":"):
                self.i -= 1
                self.fail(f"unexpected {tok!r} inside formula")
        return self.toks[start : self.i]

    def parse(self) -> Model:
        if not self.toks:
            raise ModelError("empty model", 1, 1)
        params: Dict[str, str] = {}
        globs: List[str] = []
        comps = []
        observer = None
        while self.peek() is not None:
            kw = self.peek()
            if kw == "param":
                self.take()
                name = self.ident("parameter name")
                self.take(":")
                sort = self.take(what="sort")
                if sort not in SORT_NAMES:
                    self.i -= 1
                    self.fail(f"unknown sort {sort!r}")
                self.take(";")
                if name in params:
                    self.fail(f"parameter {name!r} declared twice")
                params[name] = SORT_NAMES[sort]
            elif kw == "globals":
                self.take()
                globs.extend(self.ident_list("variable name"))
                self.take(";")
            elif kw in ("automaton", "observer"):
                loc = self.where()
                self.take()
                body = self.automaton(params, is_obs=(kw == "observer"))
                if kw == "observer":
                    if observer is not None:
                        raise ModelError("only one observer is allowed", *loc)
                    observer = body
                else:
                    comps.append(body)
            else:
                self.fail(f"expected a declaration, got {kw!r}")
        if observer is None:
            raise ModelError("missing observer", *self.end)
        if not comps:
            raise ModelError("missing automaton", *self.end)
        names = [c.name for c in comps] + [observer.name]
        if len(set(names)) != len(names):
            raise ModelError("automaton names must be unique", 1, 1)
        try:
            net = Network(tuple(comps), params=params, globals=tuple(globs))
            for g in globs:
                if g not in net.sorts:
                    raise AutomatonError(f"global {g!r} is not a network variable")
            check_observer(net, observer)
        except AutomatonError as e:
            raise ModelError(str(e), 1, 1) from None
        return Model(net, observer)

    def automaton(self, params: Dict[str, str], is_obs: bool) -> DataAutomaton:
        loc = self.where()
        name = self.ident("automaton name")
        self.take("{")
        vars_: List[str] = []
        sorts: Dict[str, str] = {}
        alphabet: List[str] = []
        init = None
        finals: List[str] = []
        rules = []
        raw_rules = []
        states: List[str] = []

        def note_state(s):
            if s not in states:
                states.append(s)

        while self.peek() != "}":
            kw = self.peek()
            if kw is None:
                self.fail("unexpected end of input, expected '}'")
            if self.peek2() == "->":
                kw = None
            if kw == "vars":
                self.take()
                group = self.ident_list("variable name")
                sort = RAT
                if self.peek() == ":":
                    self.take()
                    s = self.take(what="sort")
                    if s not in SORT_NAMES:
                        self.i -= 1
                        self.fail(f"unknown sort {s!r}")
                    sort = SORT_NAMES[s]
                self.take(";")
                for v in group:
                    if v in vars_:
                        self.fail(f"variable {v!r} declared twice")
                    if v in params:
                        self.fail(f"{v!r} is a parameter")
                    vars_.append(v)
                    sorts[v] = sort
            elif kw == "alphabet":
                self.take()
                alphabet.extend(self.ident_list("event name"))
                self.take(";")
            elif kw == "init":
                self.take()
                init = self.ident("state name")
                note_state(init)
                self.take(";")
            elif kw == "final":
                self.take()
                finals.extend(self.ident_list("state name"))
                for s in finals:
                    note_state(s)
                self.take(";")
            else:
                rloc = self.where()
                src = self.ident("state name")
                self.take("->")
                dst = self.ident("state name")
                self.take(":")
                ev = self.ident("event name")
                self.take(",")
                toks = self.formula_tokens()
                self.take(";")
                note_state(src)
                note_state(dst)
                raw_rules.append((src, dst, ev, toks, rloc))
        self.take("}")
        if init is None:
            raise ModelError(f"automaton {name!r} has no initial state", *loc)
        all_sorts = dict(sorts)
        if not is_obs:
            all_sorts.update(params)
        reader = FormulaReader(all_sorts, strict=True)
        for src, dst, ev, toks, rloc in raw_rules:
            if ev not in alphabet:
                raise ModelError(f"event {ev!r} is not in the alphabet of {name!r}", *rloc)
            try:
                tree, _ = read_sexpr(toks)
                guard = reader.formula(tree)
            except ParseError as e:
                raise ModelError(e.msg, e.line or rloc[0], e.col or rloc[1]) from None
            rules.append(Rule(src, ev, guard, dst))
        all_vars = list(vars_) + ([] if is_obs else [p for p in params])
        try:
            return DataAutomaton(name, tuple(all_vars), tuple(alphabet), tuple(states), init, frozenset(finals), tuple(rules), all_sorts)
        except AutomatonError as e:
            raise ModelError(str(e), *loc) from None


def parse_model(text: str) -> Model:
    return _Parser(text).parse()


def load_model(path: str) -> Model:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror}") from None
    return parse_model(text)


def _sort_suffix(sort: str) -> str:
    return " : int" if sort == INT else ""


def _format_automaton(kw: str, a: DataAutomaton, params) -> List[str]:
    lines = [f"{kw} {a.name} {{"]
    own = [v for v in a.vars if v not in params]
    for sort in (RAT, INT):
        group = [v for v in own if a.sort(v) == sort]
        if group:
            lines.append(f"  vars {', '.join(group)}{_sort_suffix(sort)};")
    if a.alphabet:
        lines.append(f"  alphabet {', '.join(a.alphabet)};")
    lines.append(f"  init {a.initial};")
    fin = [s for s in a.states if s in a.finals]
    if fin:
        lines.append(f"  final {', '.join(fin)};")
    for r in a.rules:
        lines.append(f"  {r.src} -> {r.dst} : {r.event}, {to_sexpr(r.guard)};")
    lines.append("}")
    return lines


def format_model(m: Model) -> str:
    """Model text that parses back to the same structure."""
    net = m.network
    lines = []
    for p, s in net.params.items():
        lines.append(f"param {p} : {'int' if s == INT else 'rat'};")
    if net.globals:
        lines.append(f"globals {', '.join(net.globals)};")
    for c in net.components:
        if lines:
            lines.append("")
        lines.extend(_format_automaton("automaton", c, net.params))
    lines.append("")
    lines.extend(_format_automaton("observer", m.observer, {}))
    return "\n".join(lines) + "\n"
