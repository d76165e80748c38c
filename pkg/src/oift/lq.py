"""Time-varying LQ search direction.

Solves

    min  int_0^T  a'z + b'v + 1/2 [z; v]' [[Q, S], [S', R]] [z; v]  dt
         + r1'z(T) + 1/2 z(T)' P1 z(T)
    s.t. zdot = A z + B v,  z(0) = 0

with the backward sweep

    -Pdot = A'P + P A - K' R K + Q,          P(T) = P1,   K = R^-1 (S' + B'P)
    -rdot = (A - B K)' r + a - K' b,          r(T) = r1

and the feedback ``v = -K z - R^-1 (B'r + b)``. Node data are interpolated
linearly at the RK4 half steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import LqData, trapezoid
from .model import SystemMatrices
from .projection import step_matrices


class RiccatiError(RuntimeError):
    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class RiccatiSolution:
    t: np.ndarray
    P: np.ndarray  # (K, 2N, 2N)
    K: np.ndarray  # (K, N, 2N)
    r: np.ndarray  # (K, 2N)
    R_inv: np.ndarray  # (K, N, N)


@dataclass(frozen=True)
class SearchDirection:
    t: np.ndarray
    z: np.ndarray
    v: np.ndarray
    dg: float


def _midpoints(arr: np.ndarray) -> np.ndarray:
    return 0.5 * (arr[1:] + arr[:-1])


def riccati_sweep(lq: LqData, sys: SystemMatrices, symmetry_tol: float = 1e-6) -> RiccatiSolution:
    A, B = sys.A, sys.B
    t = lq.t
    nodes = t.size
    dt = float(t[1] - t[0])

    R_inv = np.linalg.inv(lq.R)
    mid = {
        "Q": _midpoints(lq.Q),
        "S": _midpoints(lq.S),
        "R": _midpoints(lq.R),
        "a": _midpoints(lq.a),
        "b": _midpoints(lq.b),
    }
    mid["R_inv"] = np.linalg.inv(mid["R"])

    def rhs(P, r, Q, S, R, R_inv, a, b):
        K = R_inv @ (S.T + B.T @ P)
        AP = A.T @ P
        dP = -(AP + AP.T - K.T @ R @ K + Q)
        Acl = A - B @ K
        dr = -(Acl.T @ r + a - K.T @ b)
        return dP, dr

    def data(k):
        return lq.Q[k], lq.S[k], lq.R[k], R_inv[k], lq.a[k], lq.b[k]

    def data_mid(k):
        return tuple(mid[name][k] for name in ("Q", "S", "R", "R_inv", "a", "b"))

    P = np.empty_like(lq.Q)
    r = np.empty_like(lq.a)
    P[-1] = lq.P1
    r[-1] = lq.r1
    h = -dt
    for k in range(nodes - 2, -1, -1):
        Pk, rk = P[k + 1], r[k + 1]
        dm = data_mid(k)
        k1P, k1r = rhs(Pk, rk, *data(k + 1))
        k2P, k2r = rhs(Pk + 0.5 * h * k1P, rk + 0.5 * h * k1r, *dm)
        k3P, k3r = rhs(Pk + 0.5 * h * k2P, rk + 0.5 * h * k2r, *dm)
        k4P, k4r = rhs(Pk + h * k3P, rk + h * k3r, *data(k))
        Pn = Pk + h / 6.0 * (k1P + 2 * k2P + 2 * k3P + k4P)
        rn = rk + h / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r)
        if not (np.all(np.isfinite(Pn)) and np.all(np.isfinite(rn))):
            raise RiccatiError(f"Riccati sweep blew up at t={t[k]:.4g} s", t=float(t[k]))
        asym = np.max(np.abs(Pn - Pn.T))
        if asym > symmetry_tol * max(1.0, np.max(np.abs(Pn))):
            raise RiccatiError(
                f"Riccati solution lost symmetry ({asym:.3g}) at t={t[k]:.4g} s", t=float(t[k])
            )
        P[k] = 0.5 * (Pn + Pn.T)
        r[k] = rn

    K = R_inv @ (np.swapaxes(lq.S, 1, 2) + B.T @ P)
    return RiccatiSolution(t, P, K, r, R_inv)


def search_direction(lq: LqData, ric: RiccatiSolution, sys: SystemMatrices) -> SearchDirection:
    """Forward pass of the closed-loop perturbation from ``z(0) = 0``.

    ``v`` follows the optimal affine feedback at every node and is joined
    linearly in between, so ``(z, v)`` satisfies the same discrete dynamics as
    any stored :class:`~oift.projection.Trajectory`. ``dg`` is the trapezoid
    quadrature of ``a'z + b'v`` plus the terminal term ``r1'z(T)``.
    """
    B = sys.B
    t = lq.t
    dt = float(t[1] - t[0])
    Phi, G0, G1 = step_matrices(sys, dt)
    n2 = B.shape[0]
    eye = np.eye(n2)

    # v_k = -K_k z_k - w_k
    w = np.einsum("kij,kj->ki", ric.R_inv, ric.r @ B + lq.b)

    z = np.zeros_like(lq.a)
    v = np.zeros_like(lq.b)
    v[0] = -w[0]
    for k in range(t.size - 1):
        lhs = eye + G1 @ ric.K[k + 1]
        z[k + 1] = np.linalg.solve(lhs, Phi @ z[k] + G0 @ v[k] - G1 @ w[k + 1])
        v[k + 1] = -ric.K[k + 1] @ z[k + 1] - w[k + 1]
        if not np.all(np.isfinite(z[k + 1])):
            raise RiccatiError(f"search direction diverged at t={t[k + 1]:.4g} s", t=float(t[k + 1]))

    integrand = np.einsum("ki,ki->k", lq.a, z) + np.einsum("ki,ki->k", lq.b, v)
    dg = trapezoid(integrand, t) + float(lq.r1 @ z[-1])
    return SearchDirection(t, z, v, dg)


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    w = np.full(t.size, float(t[1] - t[0]))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def discrete_search_direction(lq: LqData, sys: SystemMatrices) -> SearchDirection:
    """Exact minimizer of the LQ problem as discretized on the trajectory grid.

    The objective is the trapezoid sum of the integrand and the dynamics are
    the same piecewise-linear-input RK4 map that defines stored trajectories,
    so ``dg`` is exactly the directional derivative of the discrete cost and
    the step is a true (modified) Newton step for it.

    Because ``z_{k+1}`` depends on ``v_{k+1}``, the recursion runs on the
    augmented state ``y_k = (z_k, v_k)`` with ``v_{k+1}`` as the decision.
    """
    t = lq.t
    nodes = t.size
    nz, nv = lq.a.shape[1], lq.b.shape[1]
    Phi, G0, G1 = step_matrices(sys, float(t[1] - t[0]))
    F = np.zeros((nz + nv, nz + nv))
    F[:nz, :nz] = Phi
    F[:nz, nz:] = G0
    G = np.vstack([G1, np.eye(nv)])
    w = trapezoid_weights(t)

    W = np.empty((nodes, nz + nv, nz + nv))
    W[:, :nz, :nz] = lq.Q
    W[:, :nz, nz:] = lq.S
    W[:, nz:, :nz] = np.swapaxes(lq.S, 1, 2)
    W[:, nz:, nz:] = lq.R
    W *= w[:, None, None]
    q = np.hstack([lq.a, lq.b]) * w[:, None]

    Vyy = W[-1].copy()
    Vyy[:nz, :nz] += lq.P1
    vy = q[-1].copy()
    vy[:nz] += lq.r1
    L = np.empty((nodes - 1, nv, nz + nv))
    ell = np.empty((nodes - 1, nv))
    for k in range(nodes - 2, -1, -1):
        PG = Vyy @ G
        Hdd = G.T @ PG
        Hdy = PG.T @ F
        try:
            chol = np.linalg.cholesky(0.5 * (Hdd + Hdd.T))
        except np.linalg.LinAlgError:
            raise RiccatiError(
                f"discrete Riccati recursion lost definiteness at t={t[k]:.4g} s", t=float(t[k])
            ) from None
        sol = np.linalg.solve(chol.T, np.linalg.solve(chol, np.column_stack([Hdy, G.T @ vy])))
        L[k], ell[k] = sol[:, :-1], sol[:, -1]
        FtP = F.T @ Vyy
        Vyy = W[k] + FtP @ F - Hdy.T @ L[k]
        Vyy = 0.5 * (Vyy + Vyy.T)
        vy = q[k] + F.T @ vy - Hdy.T @ ell[k]
        if not (np.all(np.isfinite(Vyy)) and np.all(np.isfinite(vy))):
            raise RiccatiError(f"discrete Riccati recursion blew up at t={t[k]:.4g} s", t=float(t[k]))

    z = np.zeros_like(lq.a)
    v = np.zeros_like(lq.b)
    # z(0) = 0 is fixed, v(0) is free
    v[0] = -np.linalg.solve(Vyy[nz:, nz:], vy[nz:])
    y = np.concatenate([z[0], v[0]])
    for k in range(nodes - 1):
        d = -L[k] @ y - ell[k]
        y = F @ y + G @ d
        z[k + 1], v[k + 1] = y[:nz], y[nz:]

    integrand = np.einsum("ki,ki->k", lq.a, z) + np.einsum("ki,ki->k", lq.b, v)
    dg = trapezoid(integrand, t) + float(lq.r1 @ z[-1])
    return SearchDirection(t, z, v, dg)


def lq_objective(lq: LqData, z: np.ndarray, v: np.ndarray) -> float:
    """Trapezoid value of the LQ objective at ``(z, v)``."""
    lin = np.einsum("ki,ki->k", lq.a, z) + np.einsum("ki,ki->k", lq.b, v)
    quad = (
        np.einsum("ki,kij,kj->k", z, lq.Q, z)
        + 2.0 * np.einsum("ki,kij,kj->k", z, lq.S, v)
        + np.einsum("ki,kij,kj->k", v, lq.R, v)
    )
    terminal = lq.r1 @ z[-1] + 0.5 * z[-1] @ lq.P1 @ z[-1]
    return trapezoid(lin + 0.5 * quad, lq.t) + float(terminal)


LQ_METHODS = ("discrete", "rk4")


def solve_lq(lq: LqData, sys: SystemMatrices, method: str = "discrete") -> SearchDirection:
    """Search direction by the grid-exact recursion or by the RK4 Riccati sweep."""
    if method == "discrete":
        return discrete_search_direction(lq, sys)
    if method == "rk4":
        return search_direction(lq, riccati_sweep(lq, sys), sys)
    raise ValueError(f"unknown LQ method {method!r}; expected one of {LQ_METHODS}")
