"""Reference computations that do not share code paths with the package.

Frozen hand values for the T3 grid (two generators, two loads, unit
parameters, second generator with inertia 2) were derived by hand and are
reproduced here as constants.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad_vec

T3_H2_SQUARED = 1.75
T3_TRACE_PI = 3.0
T3_SENSITIVITY_L1_L2 = -0.5
T3_L_S = np.array([[2.0, -1.0], [-1.0, 1.0]])
T3_L_HH = np.array([[1.0]])
T3_THETA = np.diag([1.0, 0.0])

TWO_BUS_ANGLE = -0.5235987755982988  # root of sin(theta) = -0.5 by bisection, frozen
TWO_BUS_WEIGHT = 0.8660254037844387


def bisect(f, lo: float, hi: float, tol: float = 1e-15) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def brute_laplacian(n: int, edges, weights) -> np.ndarray:
    L = np.zeros((n, n))
    for (i, j), w in zip(edges, weights):
        L[i, i] += w
        L[j, j] += w
        L[i, j] -= w
        L[j, i] -= w
    return L


def kron_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``A^T P + P A + Q = 0`` by vectorization."""
    n = A.shape[0]
    eye = np.eye(n)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    p = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    return p.reshape(n, n, order="F")


def kron_h2(A, B, C) -> float:
    P = kron_lyapunov(A, C.T @ C)
    return float(np.trace(B.T @ P @ B))


def quadrature_h2(A, B, C, t_final: float) -> float:
    """``int_0^T ||C e^{At} B||_F^2 dt`` by adaptive quadrature."""
    val, _ = quad_vec(lambda t: np.sum((C @ sla.expm(A * t) @ B) ** 2), 0.0, t_final, epsabs=1e-12, epsrel=1e-11)
    return float(val)


def rk4(A, B, u, x0, dt: float, steps: int, substeps: int = 1000) -> np.ndarray:
    """Fine-step RK4 for ``x' = A x + B u`` with ``u`` held over each coarse step."""
    h = dt / substeps
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for k in range(steps):
        bu = B @ u[k]
        f = lambda y: A @ y + bu  # noqa: E731
        for _ in range(substeps):
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x.copy())
    return np.array(out)
