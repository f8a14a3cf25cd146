"""Time-domain simulation of the linearized grid.

All integration is exact for inputs held constant over each step: the
continuous model is discretized once with a block matrix exponential and then
propagated as a linear recurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NotHurwitzError
from .linearization import StateSpace, hurwitz_check

MODES = ("impulse", "noise", "white")


def discretize(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold equivalent ``(e^{A dt}, int_0^dt e^{A s} ds B)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    # expm([[A, B], [0, 0]] dt) = [[A_d, B_d], [0, I]]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    F = sla.expm(M * dt)
    return F[:n, :n], F[:n, n:]


def truncated_normal(
    rng: np.random.Generator, size, low: float = -1.0, high: float = 1.0
) -> np.ndarray:
    """Standard normal draws conditioned on ``[low, high]`` by rejection."""
    out = rng.standard_normal(size)
    flat = out.reshape(-1)
    bad = np.flatnonzero((flat < low) | (flat > high))
    while bad.size:
        flat[bad] = rng.standard_normal(bad.size)
        bad = bad[(flat[bad] < low) | (flat[bad] > high)]
    return out


@dataclass(frozen=True)
class DisturbanceSpec:
    """How the disturbance inputs are generated.

    ``noise`` holds truncated-normal values for ``interval`` seconds;
    ``white`` redraws a Gaussian of variance ``1/dt`` every step (a discrete
    stand-in for unit-intensity white noise); ``impulse`` applies a unit
    impulse on every input at ``t = 0``.
    """

    mode: str = "noise"
    interval: float = 2.0
    t_final: float = 600.0
    dt: float = 0.02
    seed: int = 42
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.interval > 0:
            raise ValueError("interval must be positive")
        if not self.t_final >= 0:
            raise ValueError("t_final must be nonnegative")
        ratio = self.interval / self.dt
        if self.mode == "noise" and abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("dt must divide the hold interval")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def hold_steps(self) -> int:
        return max(1, int(round(self.interval / self.dt)))


@dataclass(frozen=True, eq=False)
class SimulationResult:
    time: np.ndarray
    outputs: np.ndarray
    dtheta: np.ndarray
    dfreq: np.ndarray
    s_accumulative: float
    s_average: float
    edge_ids: tuple[str, ...] = ()
    sf_ids: tuple[str, ...] = ()
    mean_abs_dtheta: np.ndarray = field(default=None)
    mean_abs_dfreq: np.ndarray = field(default=None)

    def stats(self) -> dict:
        return {
            "S_average": self.s_average,
            "S_accumulative": self.s_accumulative,
            "E_abs_dtheta": dict(zip(self.edge_ids, map(float, self.mean_abs_dtheta))),
            "E_abs_df": dict(zip(self.sf_ids, map(float, self.mean_abs_dfreq))),
        }


def _propagate(Ad: np.ndarray, forcing: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """States ``x_0..x_N`` of ``x_{k+1} = Ad x_k + forcing_k``.

    ``forcing`` is ``(N, n)`` or ``(N, n, batch)``.
    """
    N = forcing.shape[0]
    X = np.empty((N + 1,) + x0.shape)
    X[0] = x0
    x = x0
    for k in range(N):
        x = Ad @ x + forcing[k]
        X[k + 1] = x
    return X


def _input_sequence(spec: DisturbanceSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    N = spec.n_steps
    if spec.mode == "noise":
        n_hold = math.ceil(N / spec.hold_steps)
        held = truncated_normal(rng, (n_hold, m), spec.low, spec.high)
        return np.repeat(held, spec.hold_steps, axis=0)[:N]
    return rng.standard_normal((N, m)) / math.sqrt(spec.dt)


def simulate(ss: StateSpace, spec: DisturbanceSpec) -> SimulationResult:
    """Simulate from rest and collect the synchronization statistics.

    Branch angle differences and SF frequencies are reported unweighted
    (rad and Hz) when ``ss`` carries its angle map; otherwise only the
    weighted outputs are filled in.
    """
    A, B, C = ss.A, ss.B, ss.C
    n, m = B.shape
    N = spec.n_steps
    t = np.arange(N + 1) * spec.dt
    Ad, Bd = discretize(A, B, spec.dt)
    if spec.mode == "impulse":
        X = _propagate(Ad, np.zeros((N, n)), B @ np.ones(m))
    else:
        U = _input_sequence(spec, m, np.random.default_rng(spec.seed))
        X = _propagate(Ad, U @ Bd.T, np.zeros(n))
    Y = X @ C.T
    energy = np.einsum("ij,ij->i", Y, Y)
    s_acc = float(np.trapezoid(energy, t)) if N > 0 else 0.0
    s_avg = s_acc / spec.t_final if spec.t_final > 0 else 0.0

    if ss.angle_map is not None and ss.n_alpha is not None:
        dtheta = X[:, : ss.n_alpha] @ ss.angle_map.T
        dfreq = X[:, ss.n_alpha :] / (2.0 * math.pi)
    else:
        dtheta = np.zeros((N + 1, 0))
        dfreq = np.zeros((N + 1, 0))
    n_e = dtheta.shape[1]
    labels = [o.split(":", 1)[1] for o in ss.outputs]
    return SimulationResult(
        time=t,
        outputs=Y,
        dtheta=dtheta,
        dfreq=dfreq,
        s_accumulative=s_acc,
        s_average=s_avg,
        edge_ids=tuple(labels[:n_e]),
        sf_ids=tuple(labels[n_e:]),
        mean_abs_dtheta=np.mean(np.abs(dtheta), axis=0),
        mean_abs_dfreq=np.mean(np.abs(dfreq), axis=0),
    )


def white_noise_average(ss: StateSpace, t_final: float, dt: float, seeds) -> np.ndarray:
    """Long-run time averages of ``y^T y`` under discretized unit white noise, one per seed."""
    Ad, Bd = discretize(ss.A, ss.B, dt)
    n, m = ss.B.shape
    seeds = list(seeds)
    spec = DisturbanceSpec(mode="white", t_final=t_final, dt=dt)
    U = np.stack(
        [_input_sequence(spec, m, np.random.default_rng(s)) for s in seeds], axis=-1
    )
    forcing = np.einsum("ij,tjb->tib", Bd, U)
    X = _propagate(Ad, forcing, np.zeros((n, len(seeds))))
    Y = np.einsum("pi,tib->tpb", ss.C, X)
    energy = np.einsum("tpb,tpb->tb", Y, Y)
    t = np.arange(X.shape[0]) * dt
    return np.trapezoid(energy, t, axis=0) / t_final


# -- impulse energy -------------------------------------------------------------


def finite_gramian(A: np.ndarray, Q: np.ndarray, t_final: float, dt: float) -> np.ndarray:
    """``int_0^T e^{A^T t} Q e^{A t} dt`` without solving a Lyapunov equation.

    One Van Loan exponential gives the integral over a single step ``h``;
    intervals are then combined by squaring,
    ``G(a + b) = G(a) + e^{A^T a} G(b) e^{A a}``.
    """
    n = A.shape[0]
    if t_final <= 0:
        return np.zeros((n, n))
    steps = max(1, math.ceil(t_final / dt - 1e-9))
    h = t_final / steps
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A.T
    M[:n, n:] = Q
    M[n:, n:] = A
    F = sla.expm(M * h)
    phi = F[n:, n:]
    G = phi.T @ F[:n, n:]
    G = 0.5 * (G + G.T)

    total = np.zeros((n, n))
    acc_phi = np.eye(n)
    while steps:
        if steps & 1:
            total = total + acc_phi.T @ G @ acc_phi
            acc_phi = phi @ acc_phi
        steps >>= 1
        if steps:
            G = G + phi.T @ G @ phi
            phi = phi @ phi
    return total


def impulse_energy(ss: StateSpace, t_final: float, dt: float = 0.01) -> float:
    """Output energy on ``[0, t_final]`` summed over unit impulses on each input.

    Equals ``sum_k int_0^T ||C e^{A t} B e_k||^2 dt``.
    """
    ok, abscissa = hurwitz_check(ss)
    if not ok:
        raise NotHurwitzError(f"A is not Hurwitz (spectral abscissa {abscissa:.3e})")
    if t_final <= 0:
        return 0.0
    G = finite_gramian(ss.A, ss.C.T @ ss.C, t_final, dt)
    return float(np.trace(ss.B.T @ G @ ss.B))


def settling_horizon(A: np.ndarray, tol: float = 1e-8, start: float = 1.0) -> float:
    """Smallest power-of-two multiple of ``start`` with ``||e^{A T}||_2 <= tol``."""
    ok, abscissa = hurwitz_check(A)
    if not ok:
        raise NotHurwitzError(f"A is not Hurwitz (spectral abscissa {abscissa:.3e})")
    T = start
    phi = sla.expm(A * T)
    while np.linalg.norm(phi, 2) > tol:
        T *= 2.0
        phi = phi @ phi
    return T
