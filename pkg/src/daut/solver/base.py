"""Result types, errors and solver-independent checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

from ..formula import (
    Atom,
    BudgetExceeded,
    Formula,
    VarRef,
    at_step,
    conj,
    edge_at,
    free_vars,
)
from . import fm


class SolverError(Exception):
    """Any failure that is not an answer."""


class UnsupportedSort(SolverError):
    """Integer-sorted variables reached the rational engine."""


class SatInput(SolverError):
    """Interpolation was asked for a satisfiable conjunction."""


class Timeout(SolverError):
    pass


class ProtocolError(SolverError):
    def __init__(self, msg: str, raw: str = ""):
        super().__init__(f"{msg}: {raw!r}" if raw else msg)
        self.raw = raw


class Crash(SolverError):
    def __init__(self, status):
        super().__init__(f"solver process exited with status {status}")
        self.status = status


__all__ = [
    "BudgetExceeded",
    "Crash",
    "FarkasCert",
    "ProtocolError",
    "SatInput",
    "SatResult",
    "SolverError",
    "SolverStats",
    "Timeout",
    "UnsupportedSort",
    "validate_interpolant",
]


@dataclass(frozen=True)
class LeafCert:
    """Certificate for one conjunction of atoms: the weighted atom sum is a
    contradictory constant."""

    atoms: Tuple[Atom, ...]
    multipliers: Tuple[Tuple[int, Fraction], ...]
    strict: bool

    def check(self) -> bool:
        return fm.check_conflict(self.atoms, fm.Conflict(dict(self.multipliers), self.strict))


@dataclass(frozen=True)
class FarkasCert:
    """One leaf certificate per explored cube."""

    leaves: Tuple[LeafCert, ...]

    def check(self) -> bool:
        return all(leaf.check() for leaf in self.leaves)


@dataclass(frozen=True)
class SatResult:
    sat: bool
    model: Optional[Dict[VarRef, Fraction]] = None
    cert: Optional[FarkasCert] = None

    def __bool__(self):
        return self.sat


@dataclass
class SolverStats:
    queries: int = 0
    sat_calls: int = 0
    itp_calls: int = 0
    cache_hits: int = 0
    leaves: int = 0
    fallbacks: int = 0
    extra: Dict[str, int] = field(default_factory=dict)


def cut_formulas(phi: Formula, thetas: Sequence[Formula]):
    """Step-indexed ``phi`` and edges, as used at every interpolation cut."""
    return at_step(phi, 0), [edge_at(t, i + 1) for i, t in enumerate(thetas)]


def validate_interpolant(solver, phi: Formula, thetas: Sequence[Formula], seq: Sequence[Formula]) -> bool:
    """Check the sequence conditions plus the cut-vocabulary condition.

    ``seq`` elements are over plain variables; element ``i`` is read at
    step ``i``.
    """
    m = len(thetas)
    if len(seq) != m + 1:
        return False
    p0, edges = cut_formulas(phi, thetas)
    steps = [at_step(s, i) for i, s in enumerate(seq)]
    prefix_vars = set(free_vars(p0))
    suffix_sets = [set() for _ in range(m + 2)]
    for i in range(m - 1, -1, -1):
        suffix_sets[i] = suffix_sets[i + 1] | set(free_vars(edges[i]))
    for i in range(m + 1):
        if i > 0:
            prefix_vars |= free_vars(edges[i - 1])
        # edges[i:] are the transitions after cut i
        common = prefix_vars & suffix_sets[i]
        if not set(free_vars(steps[i])) <= common:
            return False
    if not solver.entails(p0, steps[0]):
        return False
    for i in range(1, m + 1):
        if not solver.entails(conj(steps[i - 1], edges[i - 1]), steps[i]):
            return False
    return not solver.is_sat(steps[m]).sat
