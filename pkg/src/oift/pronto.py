"""Projection operator Newton iteration on the trajectory manifold."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cost import CostWeights, DesiredOutput, assemble_lq_data, total_cost
from .lq import LQ_METHODS, RiccatiError, SearchDirection, solve_lq
from .model import SystemMatrices, build_system
from .potential import FormationSpec
from .projection import Curve, FeedbackGains, Trajectory, open_loop_rollout, project

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter_reached"
LINE_SEARCH_FAILED = "line_search_failed"


class LineSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 50
    epsilon: float = 1e-8
    armijo_alpha: float = 1e-4
    armijo_beta: float = 0.5
    gamma_min: float = 1e-8
    safe_hessian: bool = True
    lq_method: str = "discrete"

    def __post_init__(self):
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.armijo_alpha <= 0.5:
            raise ValueError("armijo_alpha must lie in (0, 0.5]")
        if not 0 < self.armijo_beta < 1:
            raise ValueError("armijo_beta must lie in (0, 1)")
        if not 0 < self.gamma_min <= 1:
            raise ValueError("gamma_min must lie in (0, 1]")
        if self.lq_method not in LQ_METHODS:
            raise ValueError(f"lq_method must be one of {LQ_METHODS}")


@dataclass(frozen=True)
class Problem:
    """Everything that defines one formation-tracking instance."""

    sys: SystemMatrices
    x0: np.ndarray
    t: np.ndarray
    weights: CostWeights
    formation: FormationSpec
    desired: DesiredOutput
    gains: FeedbackGains

    @property
    def spec(self):
        return self.sys.spec

    def cost(self, xi: Trajectory) -> float:
        return total_cost(xi, self.weights, self.spec, self.formation, self.desired)

    def project(self, curve: Curve) -> Trajectory:
        return project(curve, self.gains, self.sys, self.x0)

    def initial_trajectory(self) -> Trajectory:
        return open_loop_rollout(np.zeros((self.t.size, self.spec.N)), self.t, self.sys, self.x0)

    def lq_data(self, xi: Trajectory, safe: bool = True):
        return assemble_lq_data(xi, self.weights, self.spec, self.formation, self.desired, safe)


def make_problem(spec, x0, t, weights, formation, desired, gains) -> Problem:
    return Problem(build_system(spec), np.asarray(x0, dtype=float), t, weights, formation, desired, gains)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    g: float
    dg: float
    gamma: float
    backtracks: int


@dataclass(frozen=True)
class SolveResult:
    xi_star: Trajectory
    history: list[IterationRecord]
    status: str
    g_star: float
    message: str = ""
    final_dg: float = float("nan")
    iterations: int = field(default=0)


def line_search(
    problem: Problem,
    xi: Trajectory,
    zeta: SearchDirection,
    dg: float,
    options: SolverOptions,
    g: float | None = None,
):
    """Armijo backtracking on ``g(xi + gamma zeta) = h(P(xi + gamma zeta))``.

    Returns ``(gamma, g_new, backtracks, xi_new)``.
    """
    if not dg < 0:
        raise ValueError(f"line search needs a descent direction, got dg={dg:.3g}")
    if g is None:
        g = problem.cost(xi)
    direction = Curve(zeta.t, zeta.z, zeta.v)
    base = xi.as_curve()
    gamma = 1.0
    backtracks = 0
    while gamma >= options.gamma_min:
        try:
            candidate = problem.project(base + direction.scaled(gamma))
            g_new = problem.cost(candidate)
        except (FloatingPointError, RuntimeError):
            g_new = np.inf
        if np.isfinite(g_new) and g_new <= g + options.armijo_alpha * gamma * dg:
            return gamma, g_new, backtracks, candidate
        gamma *= options.armijo_beta
        backtracks += 1
    raise LineSearchError(
        f"no step >= {options.gamma_min:g} gives sufficient decrease (g={g:.10g}, dg={dg:.3g})"
    )


def _non_psd_node(lq) -> int | None:
    for k in range(lq.Q.shape[0]):
        if np.linalg.eigvalsh(lq.Q[k]).min() < -1e-8:
            return k
    return None


def solve(problem: Problem, options: SolverOptions | None = None, xi0: Trajectory | None = None) -> SolveResult:
    options = options or SolverOptions()
    xi = xi0 if xi0 is not None else problem.initial_trajectory()
    g = problem.cost(xi)
    history: list[IterationRecord] = []
    status, message, dg = MAX_ITER, "", float("nan")

    for k in range(options.max_iter):
        lq = problem.lq_data(xi, safe=options.safe_hessian)
        try:
            zeta = solve_lq(lq, problem.sys, options.lq_method)
        except RiccatiError as exc:
            bad = None if options.safe_hessian else _non_psd_node(lq)
            if bad is not None:
                message = f"{exc}; Q_o is not PSD at node {bad} (t={lq.t[bad]:.4g} s)"
            else:
                message = str(exc)
            status = LINE_SEARCH_FAILED
            break
        dg = zeta.dg
        if -dg < options.epsilon:
            if dg > options.epsilon:
                status = LINE_SEARCH_FAILED
                message = f"search direction is not a descent direction (dg={dg:.3g})"
            else:
                status = CONVERGED
                history.append(IterationRecord(k, g, dg, 0.0, 0))
            break
        try:
            gamma, g_new, backtracks, xi_new = line_search(problem, xi, zeta, dg, options, g)
        except LineSearchError as exc:
            status, message = LINE_SEARCH_FAILED, str(exc)
            break
        history.append(IterationRecord(k, g, dg, gamma, backtracks))
        log.debug("iter %d g=%.10g dg=%.3e gamma=%.3g backtracks=%d", k, g, dg, gamma, backtracks)
        xi, g = xi_new, g_new
    else:
        # one last direction so the final -dg is known
        try:
            zeta = solve_lq(problem.lq_data(xi, safe=options.safe_hessian), problem.sys, options.lq_method)
            dg = zeta.dg
        except RiccatiError:
            dg = float("nan")

    return SolveResult(xi, history, status, g, message, dg, len(history))
