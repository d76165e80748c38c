"""Linear multi-agent double-integrator model.

State layout is ``x = [p_1, ..., p_n, pdot_1, ..., pdot_n]`` with each block of
length ``M``; the input is the stacked acceleration ``u = pddot`` of length
``N = n*M``. The system output is the barycenter ``x_B = C x`` (mean position,
mean velocity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SystemSpec:
    """Agent count ``n`` and spatial dimension ``M``.

    ``allow_single`` lifts the ``n > 1`` requirement; it only exists so the
    single-agent block structure can be exercised in isolation.
    """

    n: int
    M: int
    allow_single: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if self.M not in (1, 2, 3):
            raise ValueError(f"spatial dimension M must be 1, 2 or 3, got {self.M}")
        min_n = 1 if self.allow_single else 2
        if int(self.n) != self.n or self.n < min_n:
            raise ValueError(f"agent count n must be an integer >= {min_n}, got {self.n}")

    @property
    def N(self) -> int:
        return self.n * self.M

    @property
    def state_dim(self) -> int:
        return 2 * self.N


@dataclass(frozen=True)
class SystemMatrices:
    spec: SystemSpec
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


def build_system(spec: SystemSpec) -> SystemMatrices:
    """Materialize ``A``, ``B`` and ``C`` for the double-integrator swarm."""
    N, M, n = spec.N, spec.M, spec.n
    A = np.zeros((2 * N, 2 * N))
    A[:N, N:] = np.eye(N)
    B = np.zeros((2 * N, N))
    B[N:, :] = np.eye(N)
    C = np.zeros((2 * M, 2 * N))
    tile = np.tile(np.eye(M), (1, n)) / n
    C[:M, :N] = tile
    C[M:, N:] = tile
    for mat in (A, B, C):
        mat.setflags(write=False)
    return SystemMatrices(spec, A, B, C)


def _check_state(x: np.ndarray, spec: SystemSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.state_dim:
        raise ValueError(
            f"state has trailing dimension {x.shape[-1]}, expected {spec.state_dim}"
        )
    return x


def barycenter(x, spec: SystemSpec) -> np.ndarray:
    """Return ``C x``; accepts a single state or a stack of states ``(..., 2N)``."""
    x = _check_state(x, spec)
    n, M, N = spec.n, spec.M, spec.N
    lead = x.shape[:-1]
    pos = x[..., :N].reshape(*lead, n, M).mean(axis=-2)
    vel = x[..., N:].reshape(*lead, n, M).mean(axis=-2)
    return np.concatenate([pos, vel], axis=-1)


def agent_position(x, i: int, spec: SystemSpec) -> np.ndarray:
    """Position of agent ``i`` (1-based)."""
    x = _check_state(x, spec)
    if not 1 <= i <= spec.n:
        raise IndexError(f"agent index {i} outside 1..{spec.n}")
    M = spec.M
    return x[..., (i - 1) * M : i * M].copy()


def agent_velocity(x, i: int, spec: SystemSpec) -> np.ndarray:
    x = _check_state(x, spec)
    if not 1 <= i <= spec.n:
        raise IndexError(f"agent index {i} outside 1..{spec.n}")
    M, N = spec.M, spec.N
    return x[..., N + (i - 1) * M : N + i * M].copy()


def pack_state(positions, velocities=None) -> np.ndarray:
    """Stack per-agent ``(n, M)`` positions and velocities into a state vector."""
    positions = np.asarray(positions, dtype=float)
    if velocities is None:
        velocities = np.zeros_like(positions)
    velocities = np.asarray(velocities, dtype=float)
    if positions.shape != velocities.shape or positions.ndim != 2:
        raise ValueError("positions and velocities must both have shape (n, M)")
    return np.concatenate([positions.ravel(), velocities.ravel()])


def unpack_state(x, spec: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pack_state`; returns ``(..., n, M)`` positions and velocities."""
    x = _check_state(x, spec)
    lead = x.shape[:-1]
    N = spec.N
    return (
        x[..., :N].reshape(*lead, spec.n, spec.M),
        x[..., N:].reshape(*lead, spec.n, spec.M),
    )


def state_derivative(x, u, spec: SystemSpec) -> np.ndarray:
    # A x + B u without forming A or B.
    x = _check_state(x, spec)
    return np.concatenate([x[..., spec.N :], np.asarray(u, dtype=float)], axis=-1)
