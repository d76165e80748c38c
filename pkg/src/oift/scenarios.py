"""Desired-path generators, initial deployments and the named scenario catalog."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .cost import CostWeights, DesiredOutput
from .model import SystemSpec, pack_state
from .potential import FormationSpec, PotentialParams
from .pronto import Problem, SolverOptions, make_problem
from .projection import FeedbackGains, default_gains, time_grid

DEFAULT_DISTANCE = 5.0
DEFAULT_T = 20.0
DEFAULT_DT = 0.02
DEPLOY_RADIUS = 2.5


def gen_line(start, velocity) -> Callable[[np.ndarray], np.ndarray]:
    start = np.asarray(start, dtype=float)
    velocity = np.asarray(velocity, dtype=float)

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        return np.hstack([start + velocity * t, np.broadcast_to(velocity, (t.shape[0], velocity.size))])

    return f


def gen_point(point) -> Callable[[np.ndarray], np.ndarray]:
    return gen_line(point, np.zeros(len(point)))


def gen_tanh(v: float = 1.0, r: float = 2.0, T: float = DEFAULT_T):
    """Planar ``(v t, r tanh(t - T/2))`` with analytic velocity."""

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        th = np.tanh(t - T / 2)
        return np.column_stack([v * t, r * th, np.full_like(t, v), r * (1.0 - th**2)])

    return f


def gen_helix(v: float = 2.0, r: float = 15.0):
    """``(r cos t, r sin t, v t)`` with analytic velocity."""

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c, s = np.cos(t), np.sin(t)
        return np.column_stack([r * c, r * s, v * t, -r * s, r * c, np.full_like(t, v)])

    return f


def gen_parabola(v: float = 2.0, curvature: float = 1.0 / 200.0):
    """``(v t, curvature (v t)^2, 0)`` in the ``z = 0`` plane."""

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = v * t
        zero = np.zeros_like(t)
        return np.column_stack([x, curvature * x**2, zero, np.full_like(t, v), 2 * curvature * x * v, zero])

    return f


GENERATORS = {
    "line": gen_line,
    "constant_point": gen_point,
    "tanh_s_curve": gen_tanh,
    "helix": gen_helix,
    "parabola": gen_parabola,
}
_REQUIRED_M = {"tanh_s_curve": 2, "helix": 3, "parabola": 3}


def deploy_random(n: int, M: int, radius: float = DEPLOY_RADIUS, seed: int | None = 0) -> np.ndarray:
    """Positions uniform in ``[-radius, radius]^M`` per agent, velocities zero."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-radius, radius, size=(n, M))
    return pack_state(pos)


@dataclass(frozen=True)
class Scenario:
    name: str
    spec: SystemSpec
    x0: np.ndarray
    formation: FormationSpec
    desired_kind: str
    desired_params: dict = field(default_factory=dict)
    weights: CostWeights = field(default_factory=CostWeights)
    gains: FeedbackGains = field(default_factory=default_gains)
    options: SolverOptions = field(default_factory=SolverOptions)
    T: float = DEFAULT_T
    dt: float = DEFAULT_DT
    seed: int | None = None
    deploy_radius: float = DEPLOY_RADIUS
    # agent positions of x0 are expected to stay in this span (subspace scenarios)
    subspace: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.desired_kind not in GENERATORS:
            raise ValueError(f"unknown trajectory generator {self.desired_kind!r}")
        need = _REQUIRED_M.get(self.desired_kind)
        if need is not None and need != self.spec.M:
            raise ValueError(f"{self.desired_kind} generator needs M={need}, scenario has M={self.spec.M}")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.spec.state_dim,):
            raise ValueError(f"x0 must have length {self.spec.state_dim}")
        if self.formation.n != self.spec.n:
            raise ValueError("formation agent count differs from the system")
        time_grid(self.T, self.dt)
        object.__setattr__(self, "x0", x0)

    def desired(self) -> DesiredOutput:
        params = dict(self.desired_params)
        if self.desired_kind == "tanh_s_curve":
            params.setdefault("T", self.T)
        func = GENERATORS[self.desired_kind](**params)
        return DesiredOutput(func, self.T, self.spec.M, self.desired_kind)

    def problem(self) -> Problem:
        return make_problem(
            self.spec,
            self.x0,
            time_grid(self.T, self.dt),
            self.weights,
            self.formation,
            self.desired(),
            self.gains,
        )

    def with_seed(self, seed: int) -> "Scenario":
        """Redeploy randomly-initialized scenarios; fixed ones only record the seed."""
        if self.seed is None:
            return replace(self, seed=seed)
        x0 = deploy_random(self.spec.n, self.spec.M, self.deploy_radius, seed)
        return replace(self, seed=seed, x0=x0)


def _line_through_barycenter(x0: np.ndarray, spec: SystemSpec, speed: float = 1.0):
    n, M, N = spec.n, spec.M, spec.N
    start = x0[:N].reshape(n, M).mean(axis=0)
    mean_vel = x0[N:].reshape(n, M).mean(axis=0)
    direction = mean_vel / np.linalg.norm(mean_vel)
    return {"start": tuple(start), "velocity": tuple(speed * direction)}


def _weights(q_p: float) -> CostWeights:
    return CostWeights(q_p=q_p, q_v=1.0, r_a=1.0, k_F=0.1, potential=PotentialParams(100.0, 1.0))


def _valid2d() -> Scenario:
    spec = SystemSpec(3, 2)
    x0 = pack_state([[-2, 1], [-3, -1], [2, -2]], [[0, -5], [0, -5], [0, -5]])
    return Scenario(
        "valid2d", spec, x0, FormationSpec.complete(3, DEFAULT_DISTANCE),
        "line", _line_through_barycenter(x0, spec), _weights(10.0),
        options=SolverOptions(max_iter=50),
    )


def _valid3d() -> Scenario:
    spec = SystemSpec(4, 3)
    x0 = pack_state(
        [[-2, 1, 0], [-3, -1, 1], [2, -2, 2], [1, 3, 3]],
        [[0, -5, 5], [0, -5, 0], [0, -5, 10], [0, 0, 0]],
    )
    return Scenario(
        "valid3d", spec, x0, FormationSpec.complete(4, DEFAULT_DISTANCE),
        "line", _line_through_barycenter(x0, spec), _weights(10.0),
        options=SolverOptions(max_iter=50),
    )


def _equilibrium(M: int, n: int, seed: int = 0) -> Scenario:
    spec = SystemSpec(n, M)
    return Scenario(
        f"equilibria_{M}_{n}", spec, deploy_random(n, M, DEPLOY_RADIUS, seed),
        FormationSpec.complete(n, DEFAULT_DISTANCE), "constant_point",
        {"point": (0.0,) * M}, _weights(10.0),
        options=SolverOptions(max_iter=100), seed=seed,
    )


def _tanh_triangle() -> Scenario:
    spec = SystemSpec(3, 2)
    x0 = pack_state([[-0.5, -0.5], [0, 0], [6, 6]])
    # right angle at agent 2
    formation = FormationSpec(3, ((1, 2, 3.0), (2, 3, 4.0), (1, 3, 5.0)))
    return Scenario(
        "tanh_triangle", spec, x0, formation, "tanh_s_curve",
        {"v": 1.0, "r": 2.0}, _weights(100.0), options=SolverOptions(max_iter=50),
    )


def _helix_square() -> Scenario:
    spec = SystemSpec(4, 3)
    x0 = pack_state([[-5, -5, 0], [0, 0, 2], [6, 6, 0], [-2, 2, 0]])
    side, diag = DEFAULT_DISTANCE, DEFAULT_DISTANCE * math.sqrt(2.0)
    # square 1-2-3-4; agents 1,3 and 2,4 are opposite corners
    formation = FormationSpec(
        4, ((1, 2, side), (2, 3, side), (3, 4, side), (1, 4, side), (1, 3, diag), (2, 4, diag))
    )
    return Scenario(
        "helix_square", spec, x0, formation, "helix",
        {"v": 2.0, "r": 15.0}, _weights(100.0), options=SolverOptions(max_iter=50),
    )


def _subspace1d() -> Scenario:
    spec = SystemSpec(3, 2)
    x0 = pack_state([[-1, 0], [0, 0], [1, 0]])
    return Scenario(
        "subspace1d", spec, x0, FormationSpec.complete(3, DEFAULT_DISTANCE),
        "line", {"start": (0.0, 0.0), "velocity": (1.0, 0.0)}, _weights(10.0),
        options=SolverOptions(max_iter=50), subspace=((1.0, 0.0),),
    )


def _subspace2d() -> Scenario:
    spec = SystemSpec(4, 3)
    x0 = pack_state([[-1, 0, 0], [0, 0, 0], [1, 0, 0], [2, 0, 0]])
    return Scenario(
        "subspace2d", spec, x0, FormationSpec.complete(4, DEFAULT_DISTANCE),
        "parabola", {"v": 2.0, "curvature": 1.0 / 200.0}, _weights(10.0),
        options=SolverOptions(max_iter=50), subspace=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    )


def catalog_scenarios() -> dict[str, Scenario]:
    catalog = {
        "valid2d": _valid2d(),
        "valid3d": _valid3d(),
        "tanh_triangle": _tanh_triangle(),
        "helix_square": _helix_square(),
        "subspace1d": _subspace1d(),
        "subspace2d": _subspace2d(),
    }
    for M in (2, 3):
        for n in (5, 6, 8):
            sc = _equilibrium(M, n)
            catalog[sc.name] = sc
    return catalog


def get_scenario(name: str) -> Scenario:
    catalog = catalog_scenarios()
    try:
        return catalog[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(catalog))}") from None
