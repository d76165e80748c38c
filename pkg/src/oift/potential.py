"""Distance-based formation potential and its derivatives.

The pair potential acts on the squared distance ``s = |p_i - p_j|^2``::

    sigma(s) = k_r (1 - s/d^2)^3          for 0 <= s <= d^2   (repulsive)
    sigma(s) = k_a (sqrt(s)/d - 1)^3      for s >= d^2        (attractive)

It is C^2 at ``s = d^2`` where value, first and second derivative all vanish.
The formation cost sums ``sigma`` over both orderings of each pair, scaled by
``k_F / 2``, i.e. ``k_F`` times the sum over undirected edges.

All routines accept positions with arbitrary leading batch dimensions,
``p.shape == (..., N)``, so a whole trajectory can be evaluated at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np


@dataclass(frozen=True)
class PotentialParams:
    k_r: float = 100.0
    k_a: float = 1.0

    def __post_init__(self):
        if not (self.k_r > 0 and self.k_a > 0):
            raise ValueError(f"k_r and k_a must be positive, got {self.k_r}, {self.k_a}")


@dataclass(frozen=True)
class FormationSpec:
    """Weighted undirected edge list ``(i, j, d_ij)`` over agents ``1..n``.

    Edges are normalized to ``i < j`` and kept in construction order, which
    fixes the summation order of every edge loop below.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        seen = set()
        normalized = []
        for i, j, d in self.edges:
            i, j, d = int(i), int(j), float(d)
            if i == j:
                raise ValueError(f"self-edge ({i}, {j}) is not allowed")
            if i > j:
                i, j = j, i
            if not (1 <= i and j <= self.n):
                raise ValueError(f"edge ({i}, {j}) references an agent outside 1..{self.n}")
            if not d > 0:
                raise ValueError(f"desired distance for edge ({i}, {j}) must be positive")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            normalized.append((i, j, d))
        if not normalized:
            raise ValueError("formation needs at least one edge")
        object.__setattr__(self, "edges", tuple(normalized))

    @classmethod
    def complete(cls, n: int, d: float) -> "FormationSpec":
        """All ``n(n-1)/2`` pairs with the common distance ``d``."""
        return cls(n, tuple((i, j, d) for i, j in combinations(range(1, n + 1), 2)))

    @property
    def is_complete(self) -> bool:
        return len(self.edges) == self.n * (self.n - 1) // 2

    def distance(self, i: int, j: int) -> float:
        a, b = min(i, j), max(i, j)
        for ei, ej, d in self.edges:
            if (ei, ej) == (a, b):
                return d
        raise KeyError(f"no desired distance for pair ({i}, {j})")


def _check_s(s):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("squared distance must be nonnegative")
    return s


def sigma(s, d, params: PotentialParams):
    s = _check_s(s)
    d2 = np.asarray(d, dtype=float) ** 2
    rep = params.k_r * (1.0 - s / d2) ** 3
    att = params.k_a * (np.sqrt(s / d2) - 1.0) ** 3
    return np.where(s <= d2, rep, att)


def sigma_prime(s, d, params: PotentialParams):
    """First derivative of :func:`sigma` with respect to the squared distance."""
    s = _check_s(s)
    d = np.asarray(d, dtype=float)
    d2 = d**2
    rep = -3.0 * params.k_r / d2 * (1.0 - s / d2) ** 2
    # attractive branch is only ever selected for s >= d^2 > 0
    r = np.sqrt(np.maximum(s, d2))
    att = 3.0 * params.k_a * (r / d - 1.0) ** 2 / (2.0 * d * r)
    return np.where(s <= d2, rep, att)


def sigma_second(s, d, params: PotentialParams):
    """Second derivative of :func:`sigma` with respect to the squared distance."""
    s = _check_s(s)
    d = np.asarray(d, dtype=float)
    d2 = d**2
    rep = 6.0 * params.k_r / d2**2 * (1.0 - s / d2)
    r = np.sqrt(np.maximum(s, d2))
    w = r / d - 1.0
    att = 3.0 * params.k_a * w * (r + d) / (4.0 * d2 * r**3)
    return np.where(s <= d2, rep, att)


def _edge_arrays(p, formation: FormationSpec):
    p = np.asarray(p, dtype=float)
    N = p.shape[-1]
    if N % formation.n:
        raise ValueError(f"position vector of length {N} does not split over {formation.n} agents")
    M = N // formation.n
    pts = p.reshape(*p.shape[:-1], formation.n, M)
    idx_i = np.array([e[0] - 1 for e in formation.edges])
    idx_j = np.array([e[1] - 1 for e in formation.edges])
    dist = np.array([e[2] for e in formation.edges])
    diff = pts[..., idx_i, :] - pts[..., idx_j, :]  # (..., E, M)
    s = np.einsum("...k,...k->...", diff, diff)  # (..., E)
    return pts, M, idx_i, idx_j, dist, diff, s


def formation_cost(p, formation: FormationSpec, k_F: float, params: PotentialParams):
    """``(k_F/2) sum_i sum_{j != i} sigma(r_ij^2)``; each edge counted twice."""
    *_, dist, _, s = _edge_arrays(p, formation)
    return k_F * sigma(s, dist, params).sum(axis=-1)


def formation_gradient(p, formation: FormationSpec, k_F: float, params: PotentialParams):
    pts, M, idx_i, idx_j, dist, diff, s = _edge_arrays(p, formation)
    force = 2.0 * k_F * sigma_prime(s, dist, params)[..., None] * diff  # (..., E, M)
    grad = np.zeros_like(pts)
    for e in range(len(formation.edges)):
        grad[..., idx_i[e], :] += force[..., e, :]
        grad[..., idx_j[e], :] -= force[..., e, :]
    return grad.reshape(*pts.shape[:-2], -1)


def formation_hessian(
    p,
    formation: FormationSpec,
    k_F: float,
    params: PotentialParams,
    safe: bool = True,
):
    """Hessian of the formation cost with respect to stacked positions.

    Each edge contributes the block pattern ``[[E, -E], [-E, E]]`` on agents
    ``(i, j)`` with ``E = 4 k_F sigma'' Pi_ij + 2 k_F sigma' I``, so off-diagonal
    blocks are ``-E`` and diagonal blocks are minus the sum of the off-diagonal
    ones. With ``safe=True`` the ``sigma' I`` term is kept only where
    ``sigma' > 0`` (attracting pairs); every ``E`` is then PSD and so is the
    assembled matrix.
    """
    pts, M, idx_i, idx_j, dist, diff, s = _edge_arrays(p, formation)
    s1 = sigma_prime(s, dist, params)
    s2 = sigma_second(s, dist, params)
    blocks = 4.0 * k_F * s2[..., None, None] * np.einsum("...a,...b->...ab", diff, diff)
    iso = 2.0 * k_F * s1
    if safe:
        iso = np.where(s1 > 0, iso, 0.0)
    blocks = blocks + iso[..., None, None] * np.eye(M)

    lead = pts.shape[:-2]
    n = formation.n
    H = np.zeros((*lead, n, M, n, M))
    for e in range(len(formation.edges)):
        i, j, E = idx_i[e], idx_j[e], blocks[..., e, :, :]
        H[..., i, :, i, :] += E
        H[..., j, :, j, :] += E
        H[..., i, :, j, :] -= E
        H[..., j, :, i, :] -= E
    return H.reshape(*lead, n * M, n * M)


def pairwise_distances(p, formation: FormationSpec) -> np.ndarray:
    """Actual distance of every formation edge, in edge order."""
    *_, s = _edge_arrays(p, formation)
    return np.sqrt(s)


def regular_polygon(n: int, side: float) -> np.ndarray:
    """Vertices ``(n, 2)`` of a regular polygon with the given side length."""
    radius = side / (2.0 * math.sin(math.pi / n))
    ang = 2.0 * math.pi * np.arange(n) / n
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])
