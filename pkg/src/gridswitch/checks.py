"""Invariant checks on built-in fixtures, run by ``gridswitch selfcheck``."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import fixtures
from .errors import AssumptionViolatedError
from .grid import Grid
from .h2 import (
    decompose_laplacians,
    h2_bounds,
    h2_closed_form,
    h2_gramian,
    trace_pi_decomposed,
    trace_pi_direct,
)
from .linearization import build_state_space, hurwitz_check
from .powerflow import solve_equilibrium
from .switching import finite_difference_sensitivity, sensitivities_all

TRACE_RTOL = 1e-9
INVERSE_TOL = 1e-9
CLOSED_RTOL = 1e-8
BOUND_SLACK = 1e-8
FD_RTOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "skip"
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "fail"


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def _with_weights(grid: Grid, rng: np.random.Generator) -> Grid:
    """Same grid with every output weight scaled by a random factor in [0.5, 2]."""
    w1 = tuple(w * rng.uniform(0.5, 2.0) for w in grid.w1)
    w2 = tuple(w * rng.uniform(0.5, 2.0) for w in grid.w2)
    return replace(grid, w1=w1, w2=w2)


def embedded_fixtures() -> dict[str, Grid]:
    rng = np.random.default_rng(20240601)
    return {
        "t3": fixtures.t3(),
        "t3x": fixtures.t3x(),
        "random-uniform": fixtures.random_secure_grid(rng, 12, n_switchable=3),
        "random-heterogeneous": fixtures.random_secure_grid(rng, 12, uniform=False, n_switchable=3),
        "perturbed-weights": _with_weights(fixtures.t3x(), rng),
    }


def _check_grid(name: str, grid: Grid) -> list[CheckResult]:
    out = []
    eq = solve_equilibrium(grid)
    ss = build_state_space(grid, eq)
    ok, abscissa = hurwitz_check(ss)
    out.append(CheckResult(f"{name}/hurwitz", "pass" if ok else "fail", f"abscissa={abscissa:.3e}"))

    decomp = decompose_laplacians(grid, eq)
    direct, split = trace_pi_direct(grid, eq), trace_pi_decomposed(decomp)
    err = _rel(split, direct)
    out.append(CheckResult(f"{name}/trace-identity", "pass" if err <= TRACE_RTOL else "fail", f"rel={err:.2e}"))
    inv_err = float(np.max(np.abs(decomp.block_inverse() - np.linalg.inv(decomp.reduced()))))
    out.append(
        CheckResult(f"{name}/block-inverse", "pass" if inv_err <= INVERSE_TOL else "fail", f"err={inv_err:.2e}")
    )

    gram = h2_gramian(ss)
    lo, hi = h2_bounds(grid, eq)
    slack = BOUND_SLACK * max(1.0, abs(gram))
    ordered = lo - slack <= gram <= hi + slack
    out.append(
        CheckResult(
            f"{name}/bound-ordering",
            "pass" if ordered else "fail",
            f"{lo:.10g} <= {gram:.10g} <= {hi:.10g}",
        )
    )
    try:
        closed = h2_closed_form(grid, eq)
    except AssumptionViolatedError as exc:
        out.append(CheckResult(f"{name}/closed-vs-gramian", "skip", str(exc)))
        strict = lo < gram - slack and gram < hi - slack
        out.append(CheckResult(f"{name}/bounds-strict", "pass" if strict else "fail", f"width={hi - lo:.3e}"))
        return out
    err = _rel(closed, gram)
    out.append(CheckResult(f"{name}/closed-vs-gramian", "pass" if err <= CLOSED_RTOL else "fail", f"rel={err:.2e}"))

    lines = [e for e, s in zip(grid.index.edges, grid.switchable) if s]
    if lines:
        sens = sensitivities_all(grid, eq, decomp, lines)
        neg = all(v < 0 for v in sens.values())
        out.append(CheckResult(f"{name}/sensitivity-sign", "pass" if neg else "fail", f"max={max(sens.values()):.3e}"))
        worst = max(_rel(sens[c], finite_difference_sensitivity(grid, eq, c)) for c in lines)
        out.append(
            CheckResult(f"{name}/finite-difference", "pass" if worst <= FD_RTOL else "fail", f"rel={worst:.2e}")
        )
    return out


def run_selfcheck(grids: dict[str, Grid] | None = None) -> list[CheckResult]:
    """Run every check; exceptions are recorded as failures rather than raised."""
    grids = embedded_fixtures() if grids is None else grids
    results: list[CheckResult] = []
    for name, grid in grids.items():
        try:
            results.extend(_check_grid(name, grid))
        except Exception as exc:  # noqa: BLE001
            results.append(CheckResult(f"{name}/error", "fail", f"{type(exc).__name__}: {exc}"))
    results.extend(_hand_values())
    return results


def _hand_values() -> list[CheckResult]:
    grid = fixtures.t3()
    eq = solve_equilibrium(grid)
    decomp = decompose_laplacians(grid, eq)
    checks: list[tuple[str, Callable[[], float], float, float]] = [
        ("t3/h2-gramian", lambda: h2_gramian(build_state_space(grid, eq)), 1.75, 1e-9),
        ("t3/h2-closed", lambda: h2_closed_form(grid, eq), 1.75, 1e-12),
        ("t3/sensitivity", lambda: sensitivities_all(grid, eq, decomp, ["l1-l2"])["l1-l2"], -0.5, 1e-10),
    ]
    out = []
    for name, fn, want, tol in checks:
        got = fn()
        out.append(CheckResult(name, "pass" if abs(got - want) <= tol else "fail", f"{got:.12g} (want {want})"))
    return out
