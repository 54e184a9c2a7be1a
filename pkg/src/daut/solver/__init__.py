"""Satisfiability, entailment, elimination and interpolation for linear
rational arithmetic."""

from .base import (
    BudgetExceeded,
    Crash,
    FarkasCert,
    ProtocolError,
    SatInput,
    SatResult,
    SolverError,
    SolverStats,
    Timeout,
    UnsupportedSort,
    validate_interpolant,
)
from .builtin import BuiltinSolver


def make_solver(spec: str = "builtin", timeout_ms: int = 10_000, **kw):
    """``"builtin"`` or ``"ext:<command line>"``."""
    if spec == "builtin":
        return BuiltinSolver(**kw)
    if spec.startswith("ext:"):
        from .smtlib import ExternalSolver

        return ExternalSolver(spec[4:], timeout_ms=timeout_ms, **kw)
    raise ValueError(f"unknown solver {spec!r} (use 'builtin' or 'ext:<cmd>')")


__all__ = [
    "BudgetExceeded",
    "BuiltinSolver",
    "Crash",
    "FarkasCert",
    "ProtocolError",
    "SatInput",
    "SatResult",
    "SolverError",
    "SolverStats",
    "Timeout",
    "UnsupportedSort",
    "make_solver",
    "validate_interpolant",
]
