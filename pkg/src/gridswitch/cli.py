"""``gridswitch`` command line.

Every subcommand writes one primary output file plus ``<stem>.manifest.json``
recording the command, resolved flags, grid digest, seed, version and run
time. Floats are written with 12 significant digits. Domain errors print a
JSON object to stderr and exit 2; usage errors exit 1.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .checks import run_selfcheck
from .errors import GridSwitchError, SelfCheckError
from .grid import Grid, load_grid
from .h2 import METHODS, h2_report
from .linearization import build_state_space, hurwitz_check
from .powerflow import solve_equilibrium
from .simulation import MODES, DisturbanceSpec, simulate
from .switching import RULES, greedy_switch

logger = logging.getLogger("gridswitch")

DIGITS = 12
DEFAULT_SIM_SEED = 42


class UsageError(Exception):
    """Missing or inconsistent command-line input detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _round(x: Any) -> Any:
    """Recursively round floats to ``DIGITS`` significant digits."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if not np.isfinite(x) else float(f"{x:.{DIGITS}g}")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _round(x.tolist())
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    return x


def _fmt(x: float) -> str:
    return f"{float(x):.{DIGITS}g}"


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_round(data), indent=2) + "\n")


def manifest_path(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- subcommands ---------------------------------------------------------------


def _require_grid(args) -> Grid:
    if args.grid is None:
        raise UsageError("the following arguments are required: --grid")
    return load_grid(args.grid)


def _active_from_plan(grid: Grid, plan_path: str | None):
    if plan_path is None:
        return None
    plan = json.loads(Path(plan_path).read_text())
    return grid.edge_mask(plan["active_after"])


def cmd_equilibrium(args) -> dict:
    grid = _require_grid(args)
    eq = solve_equilibrium(grid)
    active = grid.edge_ids(eq.active)
    idx = [grid.edge_index(e) for e in active]
    return {
        "theta0": eq.theta_by_bus(grid),
        "wp": {e: eq.wp[i] for e, i in zip(active, idx)},
        "flows": {e: eq.flows[i] for e, i in zip(active, idx)},
        "slack_injection": eq.slack_injection,
        "residual": eq.residual,
        "iterations": eq.iterations,
    }


def cmd_linearize(args) -> dict:
    grid = _require_grid(args)
    ss = build_state_space(grid, solve_equilibrium(grid))
    ok, abscissa = hurwitz_check(ss)
    return {
        "A": ss.A,
        "B": ss.B,
        "C": ss.C,
        "states": list(ss.states),
        "inputs": list(ss.inputs),
        "outputs": list(ss.outputs),
        "bus_order": list(grid.index.order),
        "hurwitz": ok,
        "spectral_abscissa": abscissa,
    }


def cmd_h2(args) -> dict:
    grid = _require_grid(args)
    eq = solve_equilibrium(grid)
    return h2_report(grid, eq, args.method, args.assume_uniform).to_dict()


def cmd_switch(args) -> dict:
    grid = _require_grid(args)
    disp = None if args.dispatchable is None else [s for s in args.dispatchable.split(",") if s]
    plan = greedy_switch(grid, disp, n_on=args.n_on, rule=args.rule, assume_uniform=args.assume_uniform)
    if args.trace:
        path = Path(args.trace)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "line_id", "sensitivity", "selected", "h2_squared_after"])
            for it, line, s, sel, h2 in plan.trace_rows():
                w.writerow([it, line, _fmt(s), sel, _fmt(h2)])
    return plan.to_dict()


def cmd_simulate(args) -> None:
    grid = _require_grid(args)
    eq = solve_equilibrium(grid, _active_from_plan(grid, args.plan))
    ss = build_state_space(grid, eq)
    seed = DEFAULT_SIM_SEED if args.seed is None else args.seed
    spec = DisturbanceSpec(mode=args.mode, interval=args.interval, t_final=args.tf, dt=args.dt, seed=seed)
    res = simulate(ss, spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"dtheta:{e}" for e in res.edge_ids] + [f"df:{b}" for b in res.sf_ids])
        data = np.column_stack([res.time, res.dtheta, res.dfreq])
        for row in data:
            w.writerow([_fmt(v) for v in row])
    stats = Path(args.stats) if args.stats else out.with_name(out.stem + ".stats.json")
    write_json(stats, res.stats())


def cmd_selfcheck(args) -> None:
    results = run_selfcheck()
    for r in results:
        if not args.quiet or not r.ok:
            print(f"{r.status.upper():4s} {r.name} {r.detail}")
    report = {"passed": all(r.ok for r in results), "checks": [r.__dict__ for r in results]}
    write_json(Path(args.out), report)
    if not report["passed"]:
        failed = [r.name for r in results if not r.ok]
        raise SelfCheckError(f"failed checks: {', '.join(failed)}")


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", help="grid JSON file")
    common.add_argument("--seed", type=int, default=None, help="random seed (simulation default 42)")
    common.add_argument("--quiet", action="store_true", help="only report warnings and errors")
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS/LAPACK threads")

    parser = _Parser(prog="gridswitch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    parser.subcommands = {}

    def add(name, out, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        parser.subcommands[name] = p
        p.add_argument("--out", default=out, help=f"primary output (default {out})")
        return p

    add("equilibrium", "eq.json", "solve the lossless power flow")
    add("linearize", "ss.json", "emit the linearized state-space model")

    p = add("h2", "report.json", "evaluate the squared H2 norm and its bounds")
    p.add_argument("--method", choices=METHODS, default="all")
    p.add_argument("--assume-uniform", action="store_true", help="use the mean ratio when ratios differ")

    p = add("switch", "plan.json", "greedy sensitivity-guided line switching")
    p.add_argument("--n-on", type=int, default=20, help="number of lines to switch on")
    p.add_argument("--dispatchable", help="comma-separated line ids (default: all switchable lines)")
    p.add_argument("--rule", choices=RULES, default="first-order")
    p.add_argument("--trace", help="per-iteration sensitivity table (CSV)")
    p.add_argument("--assume-uniform", action="store_true")

    p = add("simulate", "sim.csv", "simulate the linearized grid")
    p.add_argument("--plan", help="switching plan whose final topology is simulated")
    p.add_argument("--mode", choices=MODES, default="noise")
    p.add_argument("--tf", type=float, default=600.0, help="horizon in seconds")
    p.add_argument("--dt", type=float, default=0.02, help="step in seconds")
    p.add_argument("--interval", type=float, default=2.0, help="hold time of noise values in seconds")
    p.add_argument("--stats", help="statistics JSON (default <out stem>.stats.json)")

    add("selfcheck", "selfcheck.json", "run the invariant suite on built-in grids")
    return parser


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "linearize": cmd_linearize,
    "h2": cmd_h2,
    "switch": cmd_switch,
    "simulate": cmd_simulate,
    "selfcheck": cmd_selfcheck,
}


def _error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    out = Path(args.out)
    start = time.perf_counter()
    limits = threadpool_limits(args.threads) if args.threads else nullcontext()
    try:
        with limits:
            result = COMMANDS[args.command](args)
        if result is not None:
            write_json(out, result)
    except UsageError as exc:
        sub = parser.subcommands[args.command]
        sub.print_usage(sys.stderr)
        sys.stderr.write(f"{sub.prog}: error: {exc}\n")
        return 1
    except GridSwitchError as exc:
        _error(exc.kind, str(exc))
        return 2
    except (ValueError, KeyError) as exc:
        _error("InvalidArgument", str(exc))
        return 2
    except OSError as exc:
        _error("IOError", str(exc))
        return 2

    manifest = {
        "command": args.command,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "command"},
        "grid_sha256": _sha256(Path(args.grid)) if args.grid else None,
        "seed": DEFAULT_SIM_SEED if args.seed is None and args.command == "simulate" else args.seed,
        "version": __version__,
        "duration_s": time.perf_counter() - start,
    }
    write_json(manifest_path(out), manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
