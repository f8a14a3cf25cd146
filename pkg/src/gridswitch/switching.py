"""Susceptance sensitivities of the H2 metric and greedy line switching."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .errors import EmptyCandidatesError, GridValidationError
from .grid import Grid
from .h2 import (
    LaplacianDecomposition,
    closed_form_from_decomposition,
    decompose,
    decompose_laplacians,
    uniform_ratio,
)
from .powerflow import EquilibriumState, solve_equilibrium

logger = logging.getLogger(__name__)

RULES = ("first-order", "derivative")


def _kernel(decomp: LaplacianDecomposition) -> np.ndarray:
    """``L_S^{-1} L_S* L_S^{-1}`` from one Cholesky factorization of ``L_S``."""
    cf = sla.cho_factor(decomp.L_S)
    X = sla.cho_solve(cf, decomp.L_S_star)
    return sla.cho_solve(cf, X.T)


def _load_edge(grid: Grid, line: str) -> int:
    e = grid.edge_index(line)
    if not grid.is_load_edge[e]:
        raise ValueError(f"line {line} is not a load-to-load branch")
    return e


def _unit_weight(grid: Grid, eq: EquilibriumState, e: int) -> float:
    # Wp_e / b_e; stays defined for a switched-off line at the current angles.
    i, j = grid.src[e], grid.dst[e]
    return float(grid.voltage[i] * grid.voltage[j] * np.cos(eq.theta0[i] - eq.theta0[j]))


def _from_kernel(grid: Grid, eq: EquilibriumState, K: np.ndarray, lam: float, e: int) -> float:
    n_sf = grid.index.n_sf
    i, j = grid.src[e] - n_sf, grid.dst[e] - n_sf
    quad = K[i, i] + K[j, j] - K[i, j] - K[j, i]
    return -0.5 * lam * _unit_weight(grid, eq, e) * quad


def sensitivity(
    grid: Grid,
    eq: EquilibriumState,
    decomp: LaplacianDecomposition,
    line: str,
    assume_uniform: bool = False,
) -> float:
    """Derivative of the squared H2 norm with respect to one line's susceptance.

    Angles are held at ``eq``. For a switched-off line the derivative is the
    one-sided limit at zero susceptance.
    """
    e = _load_edge(grid, line)
    lam = uniform_ratio(grid, assume_uniform)
    return _from_kernel(grid, eq, _kernel(decomp), lam, e)


def sensitivities_all(
    grid: Grid,
    eq: EquilibriumState,
    decomp: LaplacianDecomposition,
    candidates: Iterable[str],
    assume_uniform: bool = False,
) -> dict[str, float]:
    """Batched :func:`sensitivity` sharing one factorization of ``L_S``."""
    lines = [(c, _load_edge(grid, c)) for c in candidates]
    if not lines:
        return {}
    lam = uniform_ratio(grid, assume_uniform)
    K = _kernel(decomp)
    return {c: _from_kernel(grid, eq, K, lam, e) for c, e in lines}


def closed_form_at(
    grid: Grid,
    eq: EquilibriumState,
    line: str,
    susceptance: float,
    assume_uniform: bool = False,
) -> float:
    """Closed-form metric with one line's susceptance replaced, angles held fixed."""
    e = _load_edge(grid, line)
    wp = eq.wp.copy()
    active = eq.active.copy()
    wp[e] = susceptance * _unit_weight(grid, eq, e)
    active[e] = True
    lam = uniform_ratio(grid, assume_uniform)
    return closed_form_from_decomposition(grid, decompose(grid, wp, active), lam)


def finite_difference_sensitivity(
    grid: Grid,
    eq: EquilibriumState,
    line: str,
    rel_step: float = 1e-6,
    assume_uniform: bool = False,
) -> float:
    """Central difference of the closed form in the line's susceptance.

    Evaluated at the line's present value: nominal if on, zero if off. The
    step is ``rel_step`` times the nominal susceptance.
    """
    e = _load_edge(grid, line)
    b_nom = grid.susceptance[e]
    b0 = b_nom if eq.active[e] else 0.0
    h = rel_step * b_nom
    plus = closed_form_at(grid, eq, line, b0 + h, assume_uniform)
    minus = closed_form_at(grid, eq, line, b0 - h, assume_uniform)
    return (plus - minus) / (2.0 * h)


# -- greedy switching ----------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    h2_before: float
    h2_after: float
    selected: str
    candidates: tuple[str, ...]
    sensitivities: dict[str, float]
    scores: dict[str, float]


@dataclass(frozen=True, eq=False)
class SwitchingPlan:
    rule: str
    dispatchable: tuple[str, ...]
    base: tuple[str, ...]
    selected: tuple[str, ...]
    h2_trajectory: tuple[float, ...]
    iterations: tuple[IterationRecord, ...]
    equilibria: tuple[EquilibriumState, ...] = field(repr=False, default=())

    @property
    def active_after(self) -> tuple[str, ...]:
        return self.base + self.selected

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "dispatchable": list(self.dispatchable),
            "base": list(self.base),
            "selected": list(self.selected),
            "active_after": list(self.active_after),
            "h2_trajectory": list(self.h2_trajectory),
            "iterations": [
                {
                    "iteration": r.iteration,
                    "h2_before": r.h2_before,
                    "h2_after": r.h2_after,
                    "selected": r.selected,
                    "candidates": list(r.candidates),
                    "sensitivities": dict(r.sensitivities),
                    "scores": dict(r.scores),
                }
                for r in self.iterations
            ],
        }

    def trace_rows(self) -> list[tuple[int, str, float, int, float]]:
        """``(iteration, line_id, sensitivity, selected, h2_squared_after)`` rows."""
        rows = []
        for r in self.iterations:
            for line, s in r.sensitivities.items():
                rows.append((r.iteration, line, s, int(line == r.selected), r.h2_after))
        return rows


def greedy_switch(
    grid: Grid,
    dispatchable: Iterable[str] | None = None,
    n_on: int = 20,
    rule: str = "first-order",
    assume_uniform: bool = False,
) -> SwitchingPlan:
    """Switch on dispatchable lines one at a time, guided by sensitivities.

    Every iteration re-solves the power flow with the lines chosen so far
    (other dispatchable lines off), rebuilds the Laplacian split, and picks
    the off candidate with the lowest score. Under ``rule="first-order"`` the
    score is ``b_ij * dH2/db_ij``, the predicted change from switching the line
    in at its nominal susceptance; under ``rule="derivative"`` it is the raw
    derivative. Ties go to the earlier branch in file order.

    Lines outside ``dispatchable`` keep their initial on/off state. Sensitivity
    tables also report lines already switched on by the plan.
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    if dispatchable is None:
        disp = [e for e, s in zip(grid.index.edges, grid.switchable) if s]
    else:
        disp = [grid.index.edges[grid.edge_index(e)] for e in dispatchable]
    disp = sorted(set(disp), key=grid.edge_index)
    for e in disp:
        if not grid.switchable[grid.edge_index(e)]:
            raise GridValidationError(f"line {e} is not switchable")
    if n_on < 0:
        raise ValueError("n_on must be nonnegative")
    if n_on > 0 and not disp:
        raise EmptyCandidatesError("no dispatchable lines to switch on")
    if n_on > len(disp):
        raise ValueError(f"n_on={n_on} exceeds the {len(disp)} dispatchable lines")

    disp_mask = grid.edge_mask(disp)
    base_mask = grid.initially_on & ~disp_mask
    lam = uniform_ratio(grid, assume_uniform)

    def evaluate(on: list[str]):
        mask = base_mask | grid.edge_mask(on)
        eq = solve_equilibrium(grid, mask)
        decomp = decompose_laplacians(grid, eq)
        return eq, decomp, closed_form_from_decomposition(grid, decomp, lam)

    selected: list[str] = []
    eq, decomp, h2 = evaluate(selected)
    trajectory = [h2]
    equilibria = [eq]
    records = []
    for it in range(1, n_on + 1):
        candidates = [e for e in disp if e not in selected]
        sens = sensitivities_all(grid, eq, decomp, candidates + selected, assume_uniform=True)
        if rule == "first-order":
            scores = {c: grid.susceptance[grid.edge_index(c)] * sens[c] for c in candidates}
        else:
            scores = {c: sens[c] for c in candidates}
        best = candidates[0]
        for c in candidates[1:]:
            if scores[c] < scores[best]:
                best = c
        selected.append(best)
        h2_before = h2
        eq, decomp, h2 = evaluate(selected)
        logger.info("iteration %d: switch on %s, H2^2 %.6g -> %.6g", it, best, h2_before, h2)
        trajectory.append(h2)
        equilibria.append(eq)
        records.append(
            IterationRecord(
                iteration=it,
                h2_before=h2_before,
                h2_after=h2,
                selected=best,
                candidates=tuple(candidates),
                sensitivities=sens,
                scores=scores,
            )
        )
    return SwitchingPlan(
        rule=rule,
        dispatchable=tuple(disp),
        base=tuple(grid.edge_ids(base_mask)),
        selected=tuple(selected),
        h2_trajectory=tuple(trajectory),
        iterations=tuple(records),
        equilibria=tuple(equilibria),
    )
