"""H2 synchronization metric: Gramian route, Laplacian bounds, closed form.

The closed form and the bounds rest on splitting the reduced Laplacian into a
generator block (``HH``) and a load block (``EE``). For that split to reduce
to the load graph plus one self-loop, every synchronous/inverter bus must be
an internal bus hanging off exactly one load bus; :func:`decompose_laplacians`
enforces this.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg as sla

from .errors import (
    AssumptionViolatedError,
    DecompositionError,
    DisconnectedLoadGraphError,
    NonPositiveDampingError,
    NotHurwitzError,
    ResidualError,
    SingularLHHError,
)
from .grid import Grid, grid_laplacian, incidence_reduced, is_connected, weighted_laplacian
from .linearization import StateSpace, build_state_space, hurwitz_check
from .powerflow import EquilibriumState

UNIFORM_RTOL = 1e-9
LYAP_RTOL = 1e-9


# -- Lyapunov / Gramian ------------------------------------------------------


def solve_lyapunov(A: np.ndarray, Q: np.ndarray, rtol: float = LYAP_RTOL) -> np.ndarray:
    """Solve ``A^T P + P A + Q = 0`` for Hurwitz ``A``.

    Bartels-Stewart via :func:`scipy.linalg.solve_continuous_lyapunov`; the
    residual is checked against ``rtol * ||Q||_F``.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    ok, abscissa = hurwitz_check(A)
    if not ok:
        raise NotHurwitzError(f"A is not Hurwitz (spectral abscissa {abscissa:.3e})")
    P = sla.solve_continuous_lyapunov(A.T, -Q)
    P = 0.5 * (P + P.T)
    res = np.linalg.norm(A.T @ P + P @ A + Q)
    q_norm = np.linalg.norm(Q)
    if res > rtol * max(q_norm, np.finfo(float).tiny):
        raise ResidualError(f"Lyapunov residual {res:.3e} exceeds {rtol:.1e} * ||Q||_F = {rtol * q_norm:.3e}")
    return P


def h2_gramian(ss: StateSpace) -> float:
    """Squared H2 norm ``Tr(B^T P B)`` with ``P`` the observability Gramian."""
    if not np.any(ss.B):
        ok, abscissa = hurwitz_check(ss)
        if not ok:
            raise NotHurwitzError(f"A is not Hurwitz (spectral abscissa {abscissa:.3e})")
        return 0.0
    P = solve_lyapunov(ss.A, ss.C.T @ ss.C)
    return float(max(np.trace(ss.B.T @ P @ ss.B), 0.0))


# -- Laplacian decomposition -------------------------------------------------


@dataclass(frozen=True, eq=False)
class LaplacianDecomposition:
    """Generator/load split of the reduced Laplacians. Starred fields use the
    output weights ``w1``; unstarred ones the equilibrium weights."""

    L_HH: np.ndarray
    L_EH: np.ndarray
    L_EE: np.ndarray
    L_HH_star: np.ndarray
    L_EH_star: np.ndarray
    L_EE_star: np.ndarray
    L_S: np.ndarray
    L_S_star: np.ndarray
    Theta: np.ndarray
    Theta_star: np.ndarray
    E_I: np.ndarray
    schur_residual: float
    schur_residual_star: float
    ref_neighbor: str

    def block_inverse(self) -> np.ndarray:
        """Inverse of the full reduced Laplacian assembled from ``L_HH`` and ``L_S``."""
        S_inv = np.linalg.inv(self.L_S)
        H_inv = np.diag(1.0 / np.diag(self.L_HH))
        top = np.hstack([H_inv + self.E_I.T @ S_inv @ self.E_I, -self.E_I.T @ S_inv])
        bottom = np.hstack([-S_inv @ self.E_I, S_inv])
        return np.vstack([top, bottom])

    def reduced(self) -> np.ndarray:
        return np.block([[self.L_HH, self.L_EH.T], [self.L_EH, self.L_EE]])

    def reduced_star(self) -> np.ndarray:
        return np.block([[self.L_HH_star, self.L_EH_star.T], [self.L_EH_star, self.L_EE_star]])


def _sf_attachment(grid: Grid, active: np.ndarray) -> list[int]:
    """Branch index joining each SF bus (canonical order) to its load bus."""
    idx = grid.index
    attach = []
    for pos, bus in enumerate(idx.sf):
        incident = [
            e for e in idx.sf_edges if active[e] and pos in (idx.src[e], idx.dst[e])
        ]
        if not incident:
            if pos == 0:
                raise DecompositionError(f"reference bus {bus} has no active branch")
            raise SingularLHHError(f"SF bus {bus} has no incident active branch")
        if len(incident) > 1:
            raise DecompositionError(
                f"SF bus {bus} must attach to exactly one load bus (internal-bus augmentation); "
                f"found {len(incident)} branches"
            )
        attach.append(incident[0])
    return attach


def decompose(grid: Grid, wp: np.ndarray, active: np.ndarray) -> LaplacianDecomposition:
    """Decomposition for arbitrary per-branch weights ``wp`` (no sign checks)."""
    idx = grid.index
    n_sf = idx.n_sf
    k = n_sf - 1
    n_l = len(idx.loads)
    attach = _sf_attachment(grid, active)

    load_mask = active & grid.is_load_edge
    if not is_connected(n_l, grid.src[load_mask] - n_sf, grid.dst[load_mask] - n_sf):
        raise DisconnectedLoadGraphError("the active load graph is disconnected")

    Lp = grid_laplacian(grid, wp, active)
    L1 = grid_laplacian(grid, grid.w1_array)

    ref_edge = attach[0]
    neighbor = idx.dst[ref_edge] if idx.src[ref_edge] == 0 else idx.src[ref_edge]
    j = neighbor - n_sf

    lsrc, ldst = grid.src[load_mask] - n_sf, grid.dst[load_mask] - n_sf
    Theta = np.zeros((n_l, n_l))
    Theta[j, j] = wp[ref_edge]
    L_S = weighted_laplacian(n_l, lsrc, ldst, wp[load_mask]) + Theta

    all_loads = grid.is_load_edge
    Theta_star = np.zeros((n_l, n_l))
    Theta_star[j, j] = grid.w1_array[ref_edge]
    L_S_star = (
        weighted_laplacian(n_l, grid.src[all_loads] - n_sf, grid.dst[all_loads] - n_sf, grid.w1_array[all_loads])
        + Theta_star
    )

    EE = incidence_reduced(grid)
    E_I = (EE @ EE.T)[k:, :k]

    def split(L):
        return L[:k, :k], L[k:, :k], L[k:, k:]

    L_HH, L_EH, L_EE = split(Lp)
    L_HHs, L_EHs, L_EEs = split(L1)
    h = np.diag(L_HH)
    if np.any(h == 0):
        raise SingularLHHError("L_HH is singular")
    schur = L_EE - (L_EH / h[None, :]) @ L_EH.T
    schur_star = L_EEs - L_EHs @ E_I.T
    return LaplacianDecomposition(
        L_HH=L_HH,
        L_EH=L_EH,
        L_EE=L_EE,
        L_HH_star=L_HHs,
        L_EH_star=L_EHs,
        L_EE_star=L_EEs,
        L_S=L_S,
        L_S_star=L_S_star,
        Theta=Theta,
        Theta_star=Theta_star,
        E_I=E_I,
        schur_residual=float(np.max(np.abs(L_S - schur), initial=0.0)),
        schur_residual_star=float(np.max(np.abs(L_S_star - schur_star), initial=0.0)),
        ref_neighbor=idx.order[neighbor],
    )


def decompose_laplacians(grid: Grid, eq: EquilibriumState) -> LaplacianDecomposition:
    """Split the reduced Laplacians of the equilibrium topology.

    Raises
    ------
    DisconnectedLoadGraphError
        The active load-to-load branches do not connect every load bus.
    SingularLHHError
        A synchronous/inverter bus has no active branch.
    DecompositionError
        A synchronous/inverter bus has more than one branch.
    """
    return decompose(grid, eq.wp, eq.active)


# -- traces, bounds, closed form ---------------------------------------------


def disturbance_ratios(grid: Grid) -> np.ndarray:
    """``Lambda_i / d_i`` over the non-reference buses (canonical order)."""
    d = grid.damping[1:]
    if np.any(~(d > 0)):
        raise NonPositiveDampingError("damping must be positive on every non-reference bus")
    return grid.disturbance[1:] / d


def uniform_ratio(grid: Grid, assume_uniform: bool = False, rtol: float = UNIFORM_RTOL) -> float:
    """The common ratio when disturbance/damping ratios are uniform.

    With ``assume_uniform`` the mean ratio is returned regardless of spread.
    """
    r = disturbance_ratios(grid)
    if r.size == 0:
        return 0.0
    hi = float(np.max(r))
    spread = (hi - float(np.min(r))) / hi if hi > 0 else 0.0
    if spread > rtol and not assume_uniform:
        raise AssumptionViolatedError(
            f"disturbance/damping ratios are not uniform (relative spread {spread:.3e})", spread
        )
    return float(np.mean(r))


def _trace_solve(L: np.ndarray, rhs: np.ndarray) -> float:
    """``Tr(L^{-1} rhs)`` for symmetric positive definite ``L``."""
    if L.size == 0:
        return 0.0
    return float(np.trace(sla.cho_solve(sla.cho_factor(L), rhs)))


def trace_pi_direct(grid: Grid, eq: EquilibriumState) -> float:
    Lp = grid_laplacian(grid, eq.wp, eq.active)
    L1 = grid_laplacian(grid, grid.w1_array)
    return _trace_solve(Lp, L1)


def trace_pi_decomposed(decomp: LaplacianDecomposition) -> float:
    return _trace_solve(decomp.L_S, decomp.L_S_star) + float(
        np.sum(np.diag(decomp.L_HH_star) / np.diag(decomp.L_HH))
    )


def trace_pi(grid: Grid, eq: EquilibriumState) -> tuple[float, float]:
    """``Tr(L(W1) L(Wp)^{-1})`` computed directly and via the load/generator split."""
    return trace_pi_direct(grid, eq), trace_pi_decomposed(decompose_laplacians(grid, eq))


def inertia_term(grid: Grid) -> float:
    """``Tr(M^{-1} W2)`` over the non-reference SF buses."""
    return float(np.sum(grid.w2_array / grid.inertia[1 : grid.index.n_sf]))


def h2_bounds(grid: Grid, eq: EquilibriumState) -> tuple[float, float]:
    r = disturbance_ratios(grid)
    base = 0.5 * (trace_pi_direct(grid, eq) + inertia_term(grid))
    if r.size == 0:
        return 0.0, 0.0
    return float(np.min(r)) * base, float(np.max(r)) * base


def closed_form_from_decomposition(grid: Grid, decomp: LaplacianDecomposition, lambda_d: float) -> float:
    return 0.5 * lambda_d * (trace_pi_decomposed(decomp) + inertia_term(grid))


def h2_closed_form(grid: Grid, eq: EquilibriumState, assume_uniform: bool = False) -> float:
    """Gramian-free squared H2 norm, valid when every ``Lambda_i / d_i`` is equal.

    Raises :class:`AssumptionViolatedError` otherwise, unless ``assume_uniform``
    is set, in which case the mean ratio is used.
    """
    lam = uniform_ratio(grid, assume_uniform)
    return closed_form_from_decomposition(grid, decompose_laplacians(grid, eq), lam)


# -- report ------------------------------------------------------------------


@dataclass(frozen=True)
class H2Report:
    h2_squared_gramian: float | None = None
    h2_squared_closed: float | None = None
    lower_bound: float | None = None
    upper_bound: float | None = None
    trace_pi: float | None = None
    trace_pi_decomposed: float | None = None
    lambda_d_min: float | None = None
    lambda_d_max: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


METHODS = ("gramian", "closed", "bounds", "all")


def h2_report(
    grid: Grid,
    eq: EquilibriumState,
    method: str = "all",
    assume_uniform: bool = False,
) -> H2Report:
    """Evaluate the requested H2 routes.

    With ``method="all"`` a grid that violates the uniform-ratio assumption
    reports ``h2_squared_closed=None`` instead of raising.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    out: dict = {}
    r = disturbance_ratios(grid)
    if r.size:
        out["lambda_d_min"] = float(np.min(r))
        out["lambda_d_max"] = float(np.max(r))
    if method in ("gramian", "all"):
        out["h2_squared_gramian"] = h2_gramian(build_state_space(grid, eq))
    if method in ("bounds", "closed", "all"):
        decomp = decompose_laplacians(grid, eq)
        out["trace_pi"] = trace_pi_direct(grid, eq)
        out["trace_pi_decomposed"] = trace_pi_decomposed(decomp)
    if method in ("bounds", "all"):
        out["lower_bound"], out["upper_bound"] = h2_bounds(grid, eq)
    if method in ("closed", "all"):
        try:
            lam = uniform_ratio(grid, assume_uniform)
        except AssumptionViolatedError:
            if method == "closed":
                raise
        else:
            out["h2_squared_closed"] = closed_form_from_decomposition(grid, decomp, lam)
    return H2Report(**out)
