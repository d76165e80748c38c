"""Cost functional and the LQ data of the Newton search-direction problem.

The running cost at a node is

    l = 1/2 |x_B - x_B,des|^2_{Q_B} + 1/2 |u|^2_R + l_fo(p)

with ``Q_B = diag(q_p I_M, q_v I_M)`` and ``R = r_a I_N``. There is no terminal
cost. Integrals over the horizon use the composite trapezoid rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import SystemSpec, barycenter
from .potential import (
    FormationSpec,
    PotentialParams,
    formation_cost,
    formation_gradient,
    formation_hessian,
)
from .projection import Trajectory


@dataclass(frozen=True)
class CostWeights:
    q_p: float = 10.0
    q_v: float = 1.0
    r_a: float = 1.0
    k_F: float = 0.1
    potential: PotentialParams = field(default_factory=PotentialParams)

    def __post_init__(self):
        if self.q_p < 0 or self.q_v < 0:
            raise ValueError("tracking weights q_p, q_v must be nonnegative")
        if not self.r_a > 0:
            raise ValueError("input weight r_a must be positive")
        if not self.k_F > 0:
            raise ValueError("formation weight k_F must be positive")

    def Q_B(self, M: int) -> np.ndarray:
        return np.diag([self.q_p] * M + [self.q_v] * M).astype(float)

    def R(self, N: int) -> np.ndarray:
        return self.r_a * np.eye(N)


@dataclass(frozen=True)
class DesiredOutput:
    """Desired barycenter ``(p_B,des, pdot_B,des)`` as a vectorized function of time.

    ``func`` maps an array of times ``(K,)`` to ``(K, 2M)``.
    """

    func: Callable[[np.ndarray], np.ndarray]
    T: float
    M: int
    label: str = ""

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-9 * max(1.0, self.T)
        if np.any(t < -tol) or np.any(t > self.T + tol):
            raise ValueError(f"time outside [0, {self.T}]")
        out = np.asarray(self.func(np.atleast_1d(t)), dtype=float)
        return out[0] if t.ndim == 0 else out


@dataclass(frozen=True)
class LqData:
    """Per-node data of the search-direction LQ problem.

    ``a``: (K, 2N), ``b``: (K, N), ``Q``: (K, 2N, 2N), ``S``: (K, 2N, N),
    ``R``: (K, N, N); terminal ``r1``: (2N,), ``P1``: (2N, 2N).
    """

    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    r1: np.ndarray
    P1: np.ndarray


def _grid_check(xi: Trajectory, desired: DesiredOutput):
    if abs(xi.t[-1] - desired.T) > 1e-9 * max(1.0, desired.T) or xi.t[0] != 0.0:
        raise ValueError(
            f"trajectory grid [{xi.t[0]}, {xi.t[-1]}] does not match the horizon [0, {desired.T}]"
        )


def tracking_cost(x, t, weights: CostWeights, spec: SystemSpec, desired: DesiredOutput):
    err = barycenter(x, spec) - desired(t)
    w = np.diag(weights.Q_B(spec.M))
    return 0.5 * np.sum(w * err**2, axis=-1)


def input_cost(u, weights: CostWeights):
    u = np.asarray(u, dtype=float)
    return 0.5 * weights.r_a * np.sum(u**2, axis=-1)


def instantaneous_cost(
    x,
    u,
    t,
    weights: CostWeights,
    spec: SystemSpec,
    formation: FormationSpec,
    desired: DesiredOutput,
):
    x = np.asarray(x, dtype=float)
    return (
        tracking_cost(x, t, weights, spec, desired)
        + input_cost(u, weights)
        + formation_cost(x[..., : spec.N], formation, weights.k_F, weights.potential)
    )


def trapezoid(values, t) -> float:
    values = np.asarray(values, dtype=float)
    h = np.diff(t)
    return float(np.sum(0.5 * h * (values[1:] + values[:-1])))


def cost_terms(xi: Trajectory, weights, spec, formation, desired) -> dict[str, np.ndarray]:
    """Node-wise tracking, input and formation terms of the running cost."""
    _grid_check(xi, desired)
    return {
        "tracking": tracking_cost(xi.x, xi.t, weights, spec, desired),
        "input": input_cost(xi.u, weights),
        "formation": formation_cost(
            xi.x[:, : spec.N], formation, weights.k_F, weights.potential
        ),
    }


def total_cost(xi: Trajectory, weights, spec, formation, desired) -> float:
    terms = cost_terms(xi, weights, spec, formation, desired)
    return trapezoid(terms["tracking"] + terms["input"] + terms["formation"], xi.t)


def assemble_lq_data(
    xi: Trajectory,
    weights: CostWeights,
    spec: SystemSpec,
    formation: FormationSpec,
    desired: DesiredOutput,
    safe: bool = True,
) -> LqData:
    _grid_check(xi, desired)
    N, M = spec.N, spec.M
    K = xi.t.size

    Q_B = weights.Q_B(M)
    err = barycenter(xi.x, spec) - desired(xi.t)  # (K, 2M)
    # C^T Q_B e spreads the weighted error equally over the agents
    weighted = (err @ Q_B) / spec.n
    a = np.concatenate(
        [np.tile(weighted[:, :M], spec.n), np.tile(weighted[:, M:], spec.n)], axis=1
    )
    p = xi.x[:, :N]
    a[:, :N] += formation_gradient(p, formation, weights.k_F, weights.potential)

    b = weights.r_a * xi.u

    CtQC = np.zeros((2 * N, 2 * N))
    blk = np.tile(np.eye(M), (spec.n, spec.n)) / spec.n**2
    CtQC[:N, :N] = weights.q_p * blk
    CtQC[N:, N:] = weights.q_v * blk
    Q = np.broadcast_to(CtQC, (K, 2 * N, 2 * N)).copy()
    Q[:, :N, :N] += formation_hessian(p, formation, weights.k_F, weights.potential, safe=safe)

    S = np.zeros((K, 2 * N, N))
    R = np.broadcast_to(weights.R(N), (K, N, N)).copy()
    return LqData(xi.t, a, b, Q, S, R, np.zeros(2 * N), np.zeros((2 * N, 2 * N)))
