"""Trajectory projection through a constant PD tracking loop.

Every trajectory in this package lives on a uniform grid and is integrated
with classical RK4 where the input between two nodes is the straight line
joining its node values. For the double integrator the state is then a cubic
in time and RK4 reproduces it exactly, so the stored ``(x, u)`` pair is an
exact solution of ``xdot = A x + B u`` for piecewise-linear ``u``.

The projection closes the loop ``u = mu + K (alpha - x)`` at the grid nodes.
Because ``u(t_{k+1})`` depends on ``x(t_{k+1})``, each step solves a small
linear system; the realized input is what gets stored, so the result passes
the open-loop defect re-check to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemMatrices, state_derivative

SCHEME = "rk4-piecewise-linear-input"


class IntegrationError(RuntimeError):
    pass


def time_grid(T: float, dt: float) -> np.ndarray:
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return np.linspace(0.0, T, steps + 1)


def _check_grid(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("grid needs at least two nodes")
    h = np.diff(t)
    if np.any(h <= 0) or np.ptp(h) > 1e-9 * max(1.0, abs(h[0])):
        raise ValueError("grid must be strictly increasing and uniform")
    return t


@dataclass(frozen=True)
class Curve:
    """State-like ``alpha`` and input-like ``mu`` paths sampled on ``t``."""

    t: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        t = _check_grid(self.t)
        alpha = np.asarray(self.alpha, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if alpha.shape[0] != t.size or mu.shape[0] != t.size:
            raise ValueError("curve values must be given at every grid node")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu", mu)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __add__(self, other: "Curve") -> "Curve":
        if other.t.shape != self.t.shape or not np.allclose(other.t, self.t):
            raise ValueError("cannot add curves on different grids")
        return Curve(self.t, self.alpha + other.alpha, self.mu + other.mu)

    def scaled(self, gamma: float) -> "Curve":
        return Curve(self.t, gamma * self.alpha, gamma * self.mu)


@dataclass(frozen=True)
class Trajectory:
    """A state/input pair ``(x, u)`` that satisfies the dynamics on its grid."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    scheme: str = SCHEME

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def as_curve(self) -> Curve:
        return Curve(self.t, self.x, self.u)

    def __add__(self, other) -> Curve:
        return self.as_curve() + (other.as_curve() if isinstance(other, Trajectory) else other)


@dataclass(frozen=True)
class FeedbackGains:
    k_p: float
    k_v: float
    omega_n: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        if not (self.k_p > 0 and self.k_v > 0):
            raise ValueError("PD gains must be positive")

    @classmethod
    def from_natural(cls, omega_n: float, zeta: float) -> "FeedbackGains":
        """``k_p = omega_n**2`` and ``k_v = 2 zeta omega_n``."""
        return cls(omega_n**2, 2.0 * zeta * omega_n, omega_n, zeta)

    def matrix(self, N: int) -> np.ndarray:
        return np.hstack([self.k_p * np.eye(N), self.k_v * np.eye(N)])


def default_gains() -> FeedbackGains:
    return FeedbackGains.from_natural(3.0, 0.7)


def rk4_step(x, u0, u1, dt: float, spec) -> np.ndarray:
    """One RK4 step of the double integrator with ``u`` linear from ``u0`` to ``u1``."""
    um = 0.5 * (np.asarray(u0) + np.asarray(u1))
    k1 = state_derivative(x, u0, spec)
    k2 = state_derivative(x + 0.5 * dt * k1, um, spec)
    k3 = state_derivative(x + 0.5 * dt * k2, um, spec)
    k4 = state_derivative(x + dt * k3, u1, spec)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_matrices(sys: SystemMatrices, dt: float):
    """``(Phi, G0, G1)`` with ``rk4_step(x, u0, u1) == Phi x + G0 u0 + G1 u1``."""
    spec = sys.spec
    n2, N = spec.state_dim, spec.N
    zx, zu = np.zeros(n2), np.zeros(N)
    Phi = np.column_stack([rk4_step(e, zu, zu, dt, spec) for e in np.eye(n2)])
    G0 = np.column_stack([rk4_step(zx, e, zu, dt, spec) for e in np.eye(N)])
    G1 = np.column_stack([rk4_step(zx, zu, e, dt, spec) for e in np.eye(N)])
    return Phi, G0, G1


def _ensure_finite(values: np.ndarray, k: int, t: np.ndarray, what: str):
    if not np.all(np.isfinite(values)):
        raise IntegrationError(f"{what} diverged at node {k} (t={t[k]:.4g} s)")


def project(curve: Curve, gains: FeedbackGains, sys: SystemMatrices, x0) -> Trajectory:
    """Map an arbitrary curve onto the trajectory manifold."""
    spec = sys.spec
    t = curve.t
    x0 = np.asarray(x0, dtype=float)
    if curve.alpha.shape != (t.size, spec.state_dim) or curve.mu.shape != (t.size, spec.N):
        raise ValueError("curve dimensions do not match the system")
    if x0.shape != (spec.state_dim,):
        raise ValueError("x0 has the wrong length")

    K = gains.matrix(spec.N)
    Phi, G0, G1 = step_matrices(sys, curve.dt)
    implicit = np.linalg.inv(np.eye(spec.state_dim) + G1 @ K)
    # u_ff[k] = mu_k + K alpha_k; the closed-loop input is u_ff - K x
    u_ff = curve.mu + curve.alpha @ K.T

    x = np.empty_like(curve.alpha)
    u = np.empty_like(curve.mu)
    x[0] = x0
    u[0] = u_ff[0] - K @ x0
    for k in range(t.size - 1):
        x[k + 1] = implicit @ (Phi @ x[k] + G0 @ u[k] + G1 @ u_ff[k + 1])
        u[k + 1] = u_ff[k + 1] - K @ x[k + 1]
        _ensure_finite(x[k + 1], k + 1, t, "projection")
    return Trajectory(t, x, u)


def open_loop_rollout(u, t, sys: SystemMatrices, x0) -> Trajectory:
    spec = sys.spec
    t = _check_grid(t)
    u = np.asarray(u, dtype=float)
    if u.shape != (t.size, spec.N):
        raise ValueError("input path must have shape (nodes, N)")
    dt = float(t[1] - t[0])
    x = np.empty((t.size, spec.state_dim))
    x[0] = np.asarray(x0, dtype=float)
    for k in range(t.size - 1):
        x[k + 1] = rk4_step(x[k], u[k], u[k + 1], dt, spec)
        _ensure_finite(x[k + 1], k + 1, t, "rollout")
    return Trajectory(t, x, u.copy())


def trajectory_defect(xi: Trajectory, sys: SystemMatrices) -> float:
    """Largest per-step mismatch between stored states and a fresh RK4 step."""
    spec = sys.spec
    pred = rk4_step(xi.x[:-1], xi.u[:-1], xi.u[1:], xi.dt, spec)
    return float(np.max(np.abs(pred - xi.x[1:])))
