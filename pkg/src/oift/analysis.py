"""Evaluation metrics for solved formation-tracking runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cost import DesiredOutput, cost_terms, trapezoid
from .model import SystemSpec, barycenter
from .potential import FormationSpec, pairwise_distances
from .projection import Trajectory

RELAX = 0.1


def constraint_counts(p_final, formation: FormationSpec, tol: float = RELAX) -> tuple[int, int]:
    """``(satisfied, total)`` over undirected edges with ``|r_ij - d_ij| / d_ij < tol``."""
    if not formation.edges:
        raise ValueError("formation has no edges")
    ok = np.abs(edge_errors(p_final, formation)) < tol
    return int(ok.sum()), int(ok.size)


def constraint_ratio(p_final, formation: FormationSpec, tol: float = RELAX) -> Fraction:
    return Fraction(*constraint_counts(p_final, formation, tol))


def edge_errors(p_final, formation: FormationSpec) -> np.ndarray:
    """Relative edge errors ``(r_ij - d_ij) / d_ij`` in edge order."""
    r = pairwise_distances(np.asarray(p_final, dtype=float), formation)
    d = np.array([e[2] for e in formation.edges])
    return (r - d) / d


def tracking_displacement(xi: Trajectory, desired: DesiredOutput, spec: SystemSpec) -> np.ndarray:
    """Per-node distance between the barycenter position and its desired value."""
    if abs(xi.t[0]) > 0 or abs(xi.t[-1] - desired.T) > 1e-9 * max(1.0, desired.T):
        raise ValueError(f"trajectory horizon [{xi.t[0]}, {xi.t[-1]}] does not match [0, {desired.T}]")
    M = spec.M
    err = barycenter(xi.x, spec)[:, :M] - desired(xi.t)[:, :M]
    return np.linalg.norm(err, axis=1)


def _orthonormal_basis(basis, M: int) -> np.ndarray:
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    if B.ndim != 2 or B.shape[1] != M or B.shape[0] == 0:
        raise ValueError(f"basis must be a non-empty list of {M}-vectors")
    if np.linalg.matrix_rank(B, tol=1e-10 * max(1.0, np.abs(B).max())) < B.shape[0]:
        raise ValueError("basis vectors are linearly dependent")
    q, _ = np.linalg.qr(B.T)
    return q


def out_of_subspace(xi: Trajectory, basis, spec: SystemSpec) -> np.ndarray:
    """Per-node maximum over agents of the position component orthogonal to ``span(basis)``."""
    q = _orthonormal_basis(basis, spec.M)
    p = xi.x[:, : spec.N].reshape(-1, spec.n, spec.M)
    perp = p - (p @ q) @ q.T
    return np.linalg.norm(perp, axis=2).max(axis=1)


def subspace_residual(xi: Trajectory, basis, spec: SystemSpec) -> float:
    return float(out_of_subspace(xi, basis, spec).max())


@dataclass(frozen=True)
class MetricsReport:
    phi_c: Fraction
    satisfied: int
    total: int
    tracking_error: np.ndarray
    cost_terms: dict = field(default_factory=dict)
    subspace_residual: float | None = None
    final_distances: np.ndarray | None = None

    @property
    def terminal_tracking(self) -> float:
        return float(self.tracking_error[-1])

    def integrated_terms(self, t) -> dict[str, float]:
        return {k: trapezoid(v, t) for k, v in self.cost_terms.items()}

    def to_dict(self, t) -> dict:
        out = {
            "phi_c": f"{self.satisfied}/{self.total}",
            "phi_c_value": float(self.phi_c),
            "terminal_tracking_error": self.terminal_tracking,
            "max_tracking_error": float(self.tracking_error.max()),
            "integrated_cost_terms": self.integrated_terms(t),
            "subspace_residual": self.subspace_residual,
        }
        if self.final_distances is not None:
            out["final_distances"] = [float(r) for r in self.final_distances]
        return out


def metrics_report(xi: Trajectory, problem, subspace=None) -> MetricsReport:
    spec = problem.spec
    p_final = xi.x[-1, : spec.N]
    sat, tot = constraint_counts(p_final, problem.formation)
    return MetricsReport(
        phi_c=Fraction(sat, tot),
        satisfied=sat,
        total=tot,
        tracking_error=tracking_displacement(xi, problem.desired, spec),
        cost_terms=cost_terms(xi, problem.weights, spec, problem.formation, problem.desired),
        subspace_residual=None if subspace is None else subspace_residual(xi, subspace, spec),
        final_distances=pairwise_distances(p_final, problem.formation),
    )
