"""``daut`` command line.

Exit codes: 0 included (or plain success), 1 counterexample, 2 usage or
model error, 3 inconclusive.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from typing import List, Optional

from . import __version__
from .automata import AutomatonError, complement, determinize, format_trace, product
from .model import ModelError, _format_automaton, format_model, load_model

EXIT_OK = 0
EXIT_CEX = 1
EXIT_USAGE = 2
EXIT_INCONCLUSIVE = 3


def _env(name: str, default=None):
    return os.environ.get("DAUT_" + name, default)


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    v = _env(name)
    return int(v) if v not in (None, "") else default


def _env_flag(name: str) -> bool:
    return _env(name, "") not in ("", "0", "false", "no")


def _positive(text: str) -> int:
    n = int(text)
    if n <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def _grid(text: str) -> List[Fraction]:
    try:
        return [Fraction(x.strip()) for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _solver_opts(p: argparse.ArgumentParser):
    p.add_argument("--solver", default=_env("SOLVER", "builtin"), help="builtin or ext:<command>")
    p.add_argument("--timeout-ms", type=_positive, default=_env_int("TIMEOUT_MS", 10_000))
    p.add_argument("--relax-int", action="store_true", default=_env_flag("RELAX_INT"), help="treat integer variables as rationals in the builtin engine")


def _run_opts(p: argparse.ArgumentParser):
    p.add_argument("--search", choices=("bfs", "dfs"), default=_env("SEARCH", "bfs"))
    p.add_argument("--use-simulation", action="store_true", default=_env_flag("USE_SIMULATION"))
    p.add_argument("--max-nodes", type=_positive, default=_env_int("MAX_NODES", 100_000))
    p.add_argument("--max-refinements", type=_positive, default=_env_int("MAX_REFINEMENTS", 10_000))
    p.add_argument("--wall-ms", type=_positive, default=_env_int("WALL_MS", None))
    p.add_argument("--cube-budget", type=_positive, default=_env_int("CUBE_BUDGET", 100_000))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="daut", description="Trace inclusion for networks of data automata.")
    ap.add_argument("--version", action="version", version=f"daut {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("check", help="decide trace inclusion of the network in the observer")
    p.add_argument("model")
    _solver_opts(p)
    _run_opts(p)
    p.add_argument("--dump-dot", metavar="PATH")
    p.add_argument("--stats", action="store_true", default=_env_flag("STATS"))

    p = sub.add_parser("dump", help="run the check and print the final antichain as DOT")
    p.add_argument("model")
    _solver_opts(p)
    _run_opts(p)

    p = sub.add_parser("simulate", help="print the data simulation matrix of one automaton")
    p.add_argument("model")
    p.add_argument("--automaton", required=True)
    p.add_argument("-K", type=_positive, default=_env_int("K", 3))
    _solver_opts(p)

    p = sub.add_parser("oracle", help="bounded search for a counterexample")
    p.add_argument("model")
    p.add_argument("--depth", type=int, default=_env_int("DEPTH", 4))
    p.add_argument("--grid", type=_grid, default=_grid(_env("GRID", "0,1/2,1,2")))
    p.add_argument("--automaton", help="list grid traces accepted by this automaton instead")
    _solver_opts(p)

    p = sub.add_parser("determinize", help="explicit subset construction of one automaton")
    p.add_argument("model")
    p.add_argument("--automaton", required=True)
    p.add_argument("--bound", type=_positive, default=_env_int("BOUND", 12))
    p.add_argument("--complement", action="store_true")
    _solver_opts(p)

    p = sub.add_parser("product", help="explicit product of two automata")
    p.add_argument("model")
    p.add_argument("--automaton", action="append", required=True)
    _solver_opts(p)

    p = sub.add_parser("fmt", help="print the model in normal form")
    p.add_argument("model")
    return ap


def _solver(args):
    from .solver import make_solver

    kw = {"relax_integers": args.relax_int}
    if getattr(args, "cube_budget", None):
        kw["cube_budget"] = args.cube_budget
    return make_solver(args.solver, args.timeout_ms, **kw)


def _find(model, name):
    if model.observer.name == name:
        return model.observer
    for c in model.network.components:
        if c.name == name:
            return c
    raise ModelError(f"no automaton named {name!r}")


def _run(model, args, solver):
    from .checker import Checker, RunConfig

    cfg = RunConfig(
        search=args.search,
        subsumption="sim" if args.use_simulation else "img",
        max_nodes=args.max_nodes,
        max_refinements=args.max_refinements,
        wall_ms=args.wall_ms,
    )
    subsumes = None
    if args.use_simulation:
        from .simulation import sim_subsumption

        subsumes = sim_subsumption(model.network, model.observer, solver)
    chk = Checker(model.network, model.observer, solver, cfg, subsumes)
    return chk, chk.run()


def _relaxed(model, solver) -> bool:
    from .formula import INT

    return getattr(solver, "relax_integers", False) and INT in model.network.sorts.values()


def cmd_check(args, out) -> int:
    from .checker import Counterexample, Included, dump_antichain

    model = load_model(args.model)
    solver = _solver(args)
    try:
        chk, res = _run(model, args, solver)
    finally:
        solver.close()
    print(res.word, file=out)
    code = EXIT_INCONCLUSIVE
    if isinstance(res, Counterexample):
        print(format_trace(res.trace), file=out)
        if res.relaxed:
            print("note: rational relaxation (integer variables took fractional values)", file=out)
        code = EXIT_CEX
    elif isinstance(res, Included):
        if _relaxed(model, solver):
            print("note: rational relaxation of integer variables", file=out)
        code = EXIT_OK
    else:
        print(f"reason: {res.reason}", file=out)
    if args.stats:
        for k in ("nodes_expanded", "refinements", "subsume_edges", "solver_queries", "wall_ms"):
            print(f"{k}={res.stats.get(k, 0)}", file=out)
    if args.dump_dot:
        with open(args.dump_dot, "w", encoding="utf-8") as fh:
            fh.write(dump_antichain(chk.tree))
    return code


def cmd_dump(args, out) -> int:
    from .checker import dump_antichain

    model = load_model(args.model)
    solver = _solver(args)
    try:
        chk, _ = _run(model, args, solver)
    finally:
        solver.close()
    out.write(dump_antichain(chk.tree))
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    from .simulation import SimConfig, compute_simulation

    model = load_model(args.model)
    a = _find(model, args.automaton)
    solver = _solver(args)
    R = compute_simulation(a, solver, SimConfig(K=args.K))
    print(R.format(), file=out)
    return EXIT_OK


def cmd_oracle(args, out) -> int:
    from . import oracle

    model = load_model(args.model)
    solver = _solver(args)
    if args.automaton:
        a = _find(model, args.automaton)
        n = 0
        for w in oracle.grid_traces(a, args.depth, args.grid):
            print(format_trace(w), file=out)
            print("", file=out)
            n += 1
        print(f"ACCEPTED {n}", file=out)
        return EXIT_OK
    res = oracle.bounded_emptiness(model.network, model.observer, args.depth, solver)
    print(res, file=out)
    if res.found:
        print(format_trace(res.trace), file=out)
        return EXIT_CEX
    return EXIT_OK


def cmd_determinize(args, out) -> int:
    model = load_model(args.model)
    a = _find(model, args.automaton)
    solver = _solver(args)
    d = (complement if args.complement else determinize)(a, solver, args.bound)
    print("\n".join(_format_automaton("automaton", d, {})), file=out)
    return EXIT_OK


def cmd_product(args, out) -> int:
    if len(args.automaton) != 2:
        raise ModelError("product needs exactly two --automaton options")
    model = load_model(args.model)
    a, b = (_find(model, n) for n in args.automaton)
    p = product(a, b, _solver(args))
    print("\n".join(_format_automaton("automaton", p, {})), file=out)
    return EXIT_OK


def cmd_fmt(args, out) -> int:
    out.write(format_model(load_model(args.model)))
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "dump": cmd_dump,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "determinize": cmd_determinize,
    "product": cmd_product,
    "fmt": cmd_fmt,
}


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    from .solver import SolverError

    try:
        return COMMANDS[args.cmd](args, out)
    except (ModelError, AutomatonError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as e:
        if args.cmd == "check":
            print("INCONCLUSIVE", file=out)
            print(f"reason: solver failure: {e}", file=out)
        else:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())
