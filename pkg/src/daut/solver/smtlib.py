"""SMT-LIB 2.6 solver running as a subprocess.

Satisfiability goes to the external process.  Interpolants are requested
with ``(get-interpolants ...)`` over ``:named`` groups; an unsupported
command or an answer failing validation falls back to the builtin engine.
Elimination is always done by the builtin engine.
"""

from __future__ import annotations

import queue
import shlex
import subprocess
import threading
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

from ..formula import (
    FALSE,
    INT,
    Formula,
    FormulaReader,
    ParseError,
    VarRef,
    conj,
    free_vars,
    neg,
    read_sexpr,
    to_sexpr,
    tokenize,
    unstep,
    _Leaf,
    _Node,
)
from .base import (
    Crash,
    ProtocolError,
    SatInput,
    SatResult,
    SolverError,
    SolverStats,
    Timeout,
    cut_formulas,
    validate_interpolant,
)
from .builtin import BuiltinSolver


def _balance(text: str) -> int:
    """Parenthesis depth of ``text`` ignoring strings, quoted symbols and
    comments; -1 if it ends inside a string or quoted symbol."""
    depth = 0
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == '"':
            j = i + 1
            while True:
                j = text.find('"', j)
                if j < 0:
                    return -1
                if j + 1 < n and text[j + 1] == '"':
                    j += 2
                    continue
                break
            i = j + 1
            continue
        if c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                return -1
            i = j + 1
            continue
        if c == ";":
            j = text.find("\n", i)
            i = n if j < 0 else j
            continue
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        i += 1
    return depth


class ExternalSolver:
    """Talks to ``cmd`` over stdin/stdout; one query at a time."""

    def __init__(self, cmd, timeout_ms: int = 10_000, relax_integers: bool = False, debug: Optional[bool] = None, cube_budget: Optional[int] = None, interpolation: bool = True):
        self.argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        if not self.argv:
            raise ValueError("empty solver command")
        self.name = "ext:" + " ".join(self.argv)
        self.timeout_ms = timeout_ms
        kw = {} if cube_budget is None else {"cube_budget": cube_budget}
        self.fallback = BuiltinSolver(relax_integers=relax_integers, debug=debug, **kw)
        self.relax_integers = relax_integers
        self.stats = SolverStats()
        self.can_interpolate = interpolation
        self._proc = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._cache: Dict[Formula, SatResult] = {}

    # -- process --------------------------------------------------------

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise SolverError(f"cannot start {self.argv[0]}: {e.strerror}") from None
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()
        self._command("(set-option :print-success true)")
        if self.can_interpolate:
            if self._command("(set-option :produce-interpolants true)", tolerant=True) != "success":
                self.can_interpolate = False
        self._command("(set-logic ALL)", tolerant=True)

    @staticmethod
    def _pump(stream, out):
        for line in stream:
            out.put(line)
        out.put(None)

    def _ensure(self):
        if self._proc is None or self._proc.poll() is not None:
            if self._proc is not None:
                status = self._proc.returncode
                self._proc = None
                raise Crash(status)
            self._start()

    def _kill(self):
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=1)
            except Exception:
                pass
            self._proc = None

    def _send(self, text: str):
        try:
            self._proc.stdin.write(text + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            status = self._proc.poll()
            self._proc = None
            raise Crash(status) from None

    def _read(self) -> str:
        """One complete response (an atom line or a balanced s-expression)."""
        buf = ""
        wait = self.timeout_ms / 1000
        while True:
            try:
                line = self._lines.get(timeout=wait)
            except queue.Empty:
                self._kill()
                raise Timeout(f"no answer within {self.timeout_ms} ms") from None
            if line is None:
                status = self._proc.wait() if self._proc else None
                self._proc = None
                raise Crash(status)
            if not buf and (not line.strip() or line.lstrip().startswith(";")):
                continue
            buf += line
            if _balance(buf) == 0:
                return buf.strip()

    def _command(self, text: str, tolerant: bool = False) -> str:
        self._send(text)
        ans = self._read()
        if ans == "success":
            return ans
        if tolerant:
            return ans
        raise ProtocolError(f"unexpected answer to {text.split()[0][1:]}", ans)

    def close(self):
        if self._proc is not None:
            try:
                self._send("(exit)")
                self._proc.wait(timeout=1)
            except Exception:
                pass
            self._kill()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    # -- encoding -------------------------------------------------------

    @staticmethod
    def _declare(vs) -> List[str]:
        return [f"(declare-fun |{v.name}| () {'Int' if v.sort == INT else 'Real'})" for v in sorted(vs)]

    def _value(self, text_node, v: VarRef) -> Fraction:
        term = FormulaReader().term(text_node)
        if not term.is_const():
            raise ProtocolError("non-constant model value", v.name)
        return Fraction(term.const)

    def _parse(self, ans: str):
        try:
            tree, _ = read_sexpr(tokenize(ans))
        except ParseError:
            raise ProtocolError("malformed answer", ans) from None
        return tree

    # -- queries --------------------------------------------------------

    def is_sat(self, f: Formula) -> SatResult:
        self.stats.queries += 1
        self.stats.sat_calls += 1
        hit = self._cache.get(f)
        if hit is not None:
            self.stats.cache_hits += 1
            return hit
        self._ensure()
        fv = sorted(free_vars(f))
        self._command("(push 1)")
        try:
            for d in self._declare(fv):
                self._command(d)
            self._command(f"(assert {to_sexpr(f, quote=True)})")
            self._send("(check-sat)")
            ans = self._read()
            if ans == "unsat":
                res = SatResult(False)
            elif ans == "sat":
                model = {}
                if fv:
                    self._send("(get-value (" + " ".join(f"|{v.name}|" for v in fv) + "))")
                    tree = self._parse(self._read())
                    if not isinstance(tree, _Node):
                        raise ProtocolError("bad get-value answer", "")
                    names = {v.name: v for v in fv}
                    for pair in tree.items:
                        if not isinstance(pair, _Node) or len(pair.items) != 2 or not isinstance(pair.items[0], _Leaf):
                            raise ProtocolError("bad get-value entry", "")
                        key = pair.items[0].tok.strip("|")
                        if key not in names:
                            raise ProtocolError("value for an unknown variable", key)
                        model[names[key]] = self._value(pair.items[1], names[key])
                res = SatResult(True, model=model)
            elif ans == "unknown":
                raise SolverError("external solver answered unknown")
            else:
                raise ProtocolError("unexpected answer to check-sat", ans)
        finally:
            if self._proc is not None:
                self._command("(pop 1)")
        self._cache[f] = res
        return res

    def entails(self, phi: Formula, psi: Formula) -> bool:
        if phi == psi:
            return True
        return not self.is_sat(conj(phi, neg(psi))).sat

    def equivalent(self, a: Formula, b: Formula) -> bool:
        return self.entails(a, b) and self.entails(b, a)

    def _ext_interpolants(self, groups: Sequence[Formula]) -> Optional[List[Formula]]:
        """Interpolants between each prefix and the rest, or None if the
        solver declines."""
        self._ensure()
        vs = set()
        sorts = {}
        for g in groups:
            vs |= free_vars(g)
        for v in vs:
            sorts[v.base] = v.sort
        self._command("(push 1)")
        try:
            for d in self._declare(vs):
                self._command(d)
            for i, g in enumerate(groups):
                self._command(f"(assert (! {to_sexpr(g, quote=True)} :named g{i}))")
            self._send("(check-sat)")
            ans = self._read()
            if ans == "sat":
                raise SatInput("interpolation input is satisfiable")
            if ans != "unsat":
                raise ProtocolError("unexpected answer to check-sat", ans)
            self._send("(get-interpolants " + " ".join(f"g{i}" for i in range(len(groups))) + ")")
            ans = self._read()
            if ans == "unsupported" or ans.startswith("(error"):
                self.can_interpolate = False
                return None
            tree = self._parse(ans)
            if not isinstance(tree, _Node):
                raise ProtocolError("bad get-interpolants answer", ans)
            items = tree.items
            if items and isinstance(items[0], _Leaf) and items[0].tok == "interpolants":
                items = items[1:]
            reader = FormulaReader(sorts)
            try:
                return [reader.formula(x) for x in items]
            except ParseError as e:
                raise ProtocolError(f"unreadable interpolant ({e})", ans) from None
        finally:
            if self._proc is not None:
                self._command("(pop 1)")

    def seq_interpolant(self, phi: Formula, thetas: Sequence[Formula]) -> List[Formula]:
        self.stats.itp_calls += 1
        if self.can_interpolate:
            p0, edges = cut_formulas(phi, thetas)
            try:
                got = self._ext_interpolants([p0] + edges)
            except ProtocolError:
                got = None
            if got is not None and len(got) == len(edges):
                seq = [unstep(s, i) for i, s in enumerate(got)] + [FALSE]
                try:
                    if validate_interpolant(self, phi, thetas, seq):
                        return seq
                except Exception:
                    pass
        self.stats.fallbacks += 1
        return self.fallback.seq_interpolant(phi, thetas)

    def binary_interpolant(self, a: Formula, b: Formula) -> Formula:
        if self.can_interpolate:
            try:
                got = self._ext_interpolants([a, b])
            except ProtocolError:
                got = None
            if got is not None and len(got) == 1:
                itp = got[0]
                if free_vars(itp) <= (free_vars(a) & free_vars(b)) and self.entails(a, itp) and not self.is_sat(conj(itp, b)).sat:
                    return itp
        self.stats.fallbacks += 1
        return self.fallback.binary_interpolant(a, b)

    def validate_interpolant(self, phi, thetas, seq) -> bool:
        return validate_interpolant(self, phi, thetas, seq)

    def fm_eliminate(self, vars, f: Formula) -> Formula:
        return self.fallback.fm_eliminate(vars, f)

    def qe(self, f: Formula) -> Formula:
        return self.fallback.qe(f)
