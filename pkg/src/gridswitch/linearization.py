"""State-space model of the grid linearized around a power-flow solution.

States are ``col(alpha, omega)``: angles of every non-reference bus relative to
the reference, then frequencies of the non-reference synchronous/inverter
buses. Inputs are ordered SF buses first, then loads. Outputs are the
weighted angle differences over every branch (switched-off ones included, so
the output set does not change with topology), then the weighted SF
frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsecureEquilibriumError, NonPositiveDampingError
from .grid import Grid, incidence_reduced, grid_laplacian
from .powerflow import EquilibriumState, injections

HURWITZ_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransformationT:
    T: np.ndarray
    T_sf: np.ndarray
    T_l: np.ndarray


@dataclass(frozen=True, eq=False)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    states: tuple[str, ...] = ()
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    angle_map: np.ndarray | None = None
    n_alpha: int | None = None

    @property
    def n_states(self) -> int:
        return self.A.shape[0]


def build_T(grid: Grid) -> TransformationT:
    """``T = [-1 | I]`` mapping canonical-order angles to reference-relative angles."""
    n = grid.index.n_bus
    k = grid.index.n_sf
    T = np.hstack([-np.ones((n - 1, 1)), np.eye(n - 1)])
    return TransformationT(T=T, T_sf=T[:, 1:k], T_l=T[:, k:])


def _check_damping(grid: Grid) -> None:
    d = grid.damping[1:]
    if np.any(~(d > 0)):
        bad = [b for b, v in zip(grid.index.reduced, d) if not v > 0]
        raise NonPositiveDampingError(f"damping must be positive on {bad}")


def build_state_space(grid: Grid, eq: EquilibriumState) -> StateSpace:
    """Assemble ``(A, B, C)`` for the topology and weights recorded in ``eq``."""
    if np.any(eq.wp[eq.active] <= 0):
        raise InsecureEquilibriumError("equilibrium has non-positive branch weights")
    _check_damping(grid)

    idx = grid.index
    k = idx.n_sf - 1
    n_l = len(idx.loads)
    tr = build_T(grid)
    Lp = grid_laplacian(grid, eq.wp, eq.active)

    d_l = grid.damping[idx.n_sf :]
    d_sf = grid.damping[1 : idx.n_sf]
    m_sf = grid.inertia[1 : idx.n_sf]
    lam = grid.disturbance

    A11 = -tr.T_l @ ((tr.T_l.T @ Lp) / d_l[:, None])
    A12 = tr.T_sf
    A21 = -(tr.T_sf.T @ Lp) / m_sf[:, None]
    A22 = -np.diag(d_sf / m_sf)
    A = np.block([[A11, A12], [A21, A22]])

    n_alpha = idx.n_bus - 1
    B = np.zeros((n_alpha + k, k + n_l))
    B[:n_alpha, k:] = tr.T_l * (np.sqrt(lam[idx.n_sf :]) / d_l)[None, :]
    B[n_alpha:, :k] = np.diag(np.sqrt(lam[1 : idx.n_sf]) / m_sf)

    E = incidence_reduced(grid)
    n_e = E.shape[1]
    C = np.zeros((n_e + k, n_alpha + k))
    C[:n_e, :n_alpha] = np.sqrt(grid.w1_array)[:, None] * E.T
    C[n_e:, n_alpha:] = np.diag(np.sqrt(grid.w2_array))

    states = tuple(f"alpha:{b}" for b in idx.reduced) + tuple(f"omega:{b}" for b in idx.sf_reduced)
    inputs = tuple(f"u:{b}" for b in idx.sf_reduced) + tuple(f"u:{b}" for b in idx.loads)
    outputs = tuple(f"dtheta:{e}" for e in idx.edges) + tuple(f"omega:{b}" for b in idx.sf_reduced)
    return StateSpace(
        A=A, B=B, C=C, states=states, inputs=inputs, outputs=outputs, angle_map=E.T, n_alpha=n_alpha
    )


def spectral_abscissa(A: np.ndarray) -> float:
    if A.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(A).real))


def hurwitz_check(ss: StateSpace | np.ndarray, tol: float = HURWITZ_TOL) -> tuple[bool, float]:
    """Return ``(is_hurwitz, spectral_abscissa)``."""
    A = ss.A if isinstance(ss, StateSpace) else np.asarray(ss, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    abscissa = spectral_abscissa(A)
    return abscissa < -tol, abscissa


def vector_field(grid: Grid, eq: EquilibriumState, x: np.ndarray) -> np.ndarray:
    """Nonlinear right-hand side in the same state coordinates as ``A``.

    ``x`` is the absolute state ``col(alpha, omega)``; the reference angle is
    held at zero and its frequency is not a state.
    """
    idx = grid.index
    n_alpha = idx.n_bus - 1
    theta = np.concatenate([[0.0], x[:n_alpha]])
    omega = x[n_alpha:]
    P, _ = injections(grid, theta, eq.active)
    mismatch = grid.p_in - P
    d = grid.damping
    dalpha_sf = omega
    dalpha_l = mismatch[idx.n_sf :] / d[idx.n_sf :]
    domega = (-d[1 : idx.n_sf] * omega + mismatch[1 : idx.n_sf]) / grid.inertia[1 : idx.n_sf]
    return np.concatenate([dalpha_sf, dalpha_l, domega])
