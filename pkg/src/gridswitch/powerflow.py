"""Lossless steady-state power flow and linearization edge weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .errors import InsecureEquilibriumError, NonConvergenceError
from .grid import Grid, check_connected, weighted_laplacian

logger = logging.getLogger(__name__)

MAX_NEWTON_STEPS = 50
MAX_HALVINGS = 20
TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """Solved operating point. Arrays follow the grid's canonical bus order
    (``theta0``) and branch order (``wp``, ``flows``, ``active``); inactive
    branches carry zero weight and zero flow."""

    theta0: np.ndarray
    wp: np.ndarray
    flows: np.ndarray
    active: np.ndarray
    slack_injection: float
    residual: float
    iterations: int

    @property
    def alpha0(self) -> np.ndarray:
        return self.theta0[1:] - self.theta0[0]

    def theta_by_bus(self, grid: Grid) -> dict[str, float]:
        return dict(zip(grid.index.order, map(float, self.theta0)))


def injections(grid: Grid, theta: np.ndarray, active: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Net injections ``P_i = sum_j V_i V_j b_ij sin(theta_i - theta_j)`` and branch flows."""
    src, dst = grid.src, grid.dst
    coef = np.where(active, grid.voltage[src] * grid.voltage[dst] * grid.susceptance, 0.0)
    flows = coef * np.sin(theta[src] - theta[dst])
    P = np.zeros(grid.index.n_bus)
    np.add.at(P, src, flows)
    np.add.at(P, dst, -flows)
    return P, flows


def _weights(grid: Grid, theta: np.ndarray, active: np.ndarray) -> np.ndarray:
    src, dst = grid.src, grid.dst
    coef = grid.voltage[src] * grid.voltage[dst] * grid.susceptance
    return np.where(active, coef * np.cos(theta[src] - theta[dst]), 0.0)


def solve_equilibrium(
    grid: Grid,
    active_edges: Iterable[str] | np.ndarray | None = None,
    tol: float = TOLERANCE,
) -> EquilibriumState:
    """Newton solve of the lossless flow equations from a flat start.

    The reference bus is the slack: its set point is ignored and its injection
    is whatever balances the rest. Switched-off branches contribute nothing.

    Raises
    ------
    DisconnectedGraphError
        The active branches do not connect every bus.
    NonConvergenceError
        No step reduced the mismatch, the Jacobian became singular, or the
        step cap was reached.
    InsecureEquilibriumError
        The solution has an active branch with ``|theta_i - theta_j| >= pi/2``.
    """
    if isinstance(active_edges, np.ndarray) and active_edges.dtype == bool:
        active = active_edges.copy()
    else:
        active = grid.edge_mask(active_edges)
    check_connected(grid, active, "active network")

    n = grid.index.n_bus
    p = grid.p_in
    theta = np.zeros(n)
    src, dst = grid.src[active], grid.dst[active]

    def mismatch(th):
        P, _ = injections(grid, th, active)
        return (p - P)[1:]

    r = mismatch(theta)
    norm = np.max(np.abs(r), initial=0.0)
    it = 0
    while norm > tol:
        if it >= MAX_NEWTON_STEPS:
            raise NonConvergenceError(
                f"power flow did not converge in {MAX_NEWTON_STEPS} Newton steps (mismatch {norm:.3e})"
            )
        it += 1
        J = weighted_laplacian(n, src, dst, _weights(grid, theta, active)[active])[1:, 1:]
        try:
            step = sla.solve(J, r, assume_a="sym")
        except (sla.LinAlgError, ValueError):
            raise NonConvergenceError("power flow Jacobian became singular") from None
        if not np.all(np.isfinite(step)):
            raise NonConvergenceError("power flow Jacobian became singular")
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = theta.copy()
            trial[1:] += t * step
            r_trial = mismatch(trial)
            norm_trial = np.max(np.abs(r_trial), initial=0.0)
            if norm_trial < norm:
                break
            t *= 0.5
        else:
            raise NonConvergenceError(
                f"power flow line search failed after {MAX_HALVINGS} halvings (mismatch {norm:.3e})"
            )
        theta, r, norm = trial, r_trial, norm_trial
        logger.debug("newton step %d: mismatch %.3e, step length %.3g", it, norm, t)

    P, flows = injections(grid, theta, active)
    wp = _weights(grid, theta, active)
    if np.any(wp[active] <= 0):
        bad = grid.edge_ids(active & (wp <= 0))
        raise InsecureEquilibriumError(f"angle difference reaches pi/2 on {bad}")
    return EquilibriumState(
        theta0=theta,
        wp=wp,
        flows=flows,
        active=active,
        slack_injection=float(-np.sum(P[1:])),
        residual=float(norm),
        iterations=it,
    )


def branch_weights(
    grid: Grid, eq: EquilibriumState, edges: Iterable[str] | None = None
) -> np.ndarray:
    """Linearization weights ``V_i V_j b_ij cos(theta_i - theta_j)`` for ``edges``.

    Defaults to every active branch. Raises ``KeyError`` for a branch that is
    switched off in ``eq``.
    """
    if edges is None:
        return eq.wp[eq.active].copy()
    idx = [grid.edge_index(e) for e in edges]
    off = [grid.index.edges[k] for k in idx if not eq.active[k]]
    if off:
        raise KeyError(f"edges not active in this equilibrium: {off}")
    return eq.wp[idx].copy()
