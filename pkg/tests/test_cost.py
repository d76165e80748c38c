import numpy as np
import pytest

from oift.cost import (
    CostWeights,
    DesiredOutput,
    assemble_lq_data,
    cost_terms,
    input_cost,
    instantaneous_cost,
    total_cost,
    tracking_cost,
)
from oift.model import SystemSpec, build_system, pack_state
from oift.potential import FormationSpec, PotentialParams, formation_cost
from oift.projection import default_gains, open_loop_rollout, project, Curve, time_grid
from oift.scenarios import gen_line, gen_point
from oracles import central_gradient

SPEC = SystemSpec(3, 2)
SYS = build_system(SPEC)
W = CostWeights(q_p=10.0, q_v=1.0, r_a=1.0, k_F=0.1, potential=PotentialParams(100.0, 1.0))
TRI = FormationSpec.complete(3, 5.0)
TRI_POS = np.array([[0.0, 0.0], [5.0, 0.0], [2.5, 5 * np.sqrt(3) / 2]])


def on_target_desired(T=2.0):
    centre = TRI_POS.mean(axis=0)
    return DesiredOutput(gen_point(centre), T, 2)


def random_trajectory(seed, T=2.0, dt=0.02):
    rng = np.random.default_rng(seed)
    t = time_grid(T, dt)
    c = Curve(t, 3 * rng.normal(size=(t.size, 12)), rng.normal(size=(t.size, 6)))
    return project(c, default_gains(), SYS, 3 * rng.normal(size=12))


def test_weights_validation():
    for kw in ({"q_p": -1.0}, {"q_v": -1.0}, {"r_a": 0.0}, {"k_F": 0.0}):
        with pytest.raises(ValueError):
            CostWeights(**kw)


def test_desired_rejects_outside_horizon():
    d = on_target_desired(2.0)
    with pytest.raises(ValueError):
        d(2.5)
    with pytest.raises(ValueError):
        d(np.array([-0.1, 0.0]))


def test_zero_at_target():
    x = pack_state(TRI_POS)
    assert instantaneous_cost(x, np.zeros(6), 0.5, W, SPEC, TRI, on_target_desired()) == pytest.approx(0.0, abs=1e-20)


def test_only_input_term_survives():
    x = pack_state(TRI_POS)
    u = np.arange(6.0)
    val = instantaneous_cost(x, u, 0.5, W, SPEC, TRI, on_target_desired())
    assert val == pytest.approx(0.5 * 1.0 * np.sum(u**2), rel=1e-12)


def test_additive_decomposition():
    rng = np.random.default_rng(0)
    x, u = 3 * rng.normal(size=12), rng.normal(size=6)
    d = DesiredOutput(gen_line([0, 0], [1, 0.5]), 2.0, 2)
    parts = (
        tracking_cost(x, 1.0, W, SPEC, d)
        + input_cost(u, W)
        + formation_cost(x[:6], TRI, W.k_F, W.potential)
    )
    assert instantaneous_cost(x, u, 1.0, W, SPEC, TRI, d) == pytest.approx(parts, rel=1e-14)


def test_tracking_cost_uses_barycenter():
    x = pack_state([[1.0, 0.0], [3.0, 0.0], [5.0, 0.0]], [[1.0, 0.0]] * 3)
    d = DesiredOutput(gen_point([0.0, 0.0]), 1.0, 2)
    # e = (3, 0, 1, 0)
    assert tracking_cost(x, 0.0, W, SPEC, d) == pytest.approx(0.5 * (10 * 9 + 1 * 1))


def test_constant_integrand():
    t = time_grid(2.0, 0.02)
    x0 = pack_state(TRI_POS)
    u = np.zeros((t.size, 6))
    xi = open_loop_rollout(u, t, SYS, x0)
    # pure tracking offset of (1, 0) in position
    centre = TRI_POS.mean(axis=0) + np.array([1.0, 0.0])
    d = DesiredOutput(gen_point(centre), 2.0, 2)
    assert total_cost(xi, W, SPEC, TRI, d) == pytest.approx(0.5 * 10 * 1.0 * 2.0, rel=1e-12)


def test_total_cost_nonnegative_and_consistent():
    d = DesiredOutput(gen_line([0, 0], [1, 0]), 2.0, 2)
    for seed in range(5):
        xi = random_trajectory(seed)
        g = total_cost(xi, W, SPEC, TRI, d)
        terms = cost_terms(xi, W, SPEC, TRI, d)
        assert g >= 0
        inst = instantaneous_cost(xi.x, xi.u, xi.t, W, SPEC, TRI, d)
        np.testing.assert_allclose(terms["tracking"] + terms["input"] + terms["formation"], inst, rtol=1e-13)


def test_grid_mismatch():
    xi = random_trajectory(0, T=2.0)
    with pytest.raises(ValueError):
        total_cost(xi, W, SPEC, TRI, DesiredOutput(gen_point([0, 0]), 3.0, 2))


def test_quadrature_richardson():
    # smooth analytic trajectory: u(t) = sin(t) per component
    d = DesiredOutput(gen_line([0, 0], [0.3, 0.1]), 2.0, 2)

    def cost(dt):
        t = time_grid(2.0, dt)
        u = np.sin(t)[:, None] * np.linspace(0.5, 1.5, 6)[None]
        xi = open_loop_rollout(u, t, SYS, pack_state(TRI_POS + 0.5))
        return total_cost(xi, W, SPEC, TRI, d)

    c1, c2, c4 = cost(0.04), cost(0.02), cost(0.01)
    assert abs(c2 - c4) < abs(c1 - c2)
    ratio = (c1 - c2) / (c2 - c4)
    assert 3.5 < ratio < 4.5
    assert abs(c2 - c4) < 1e-3 * abs(c4)


class TestLqData:
    def test_on_target_node(self):
        t = time_grid(1.0, 0.02)
        xi = open_loop_rollout(np.zeros((t.size, 6)), t, SYS, pack_state(TRI_POS))
        lq = assemble_lq_data(xi, W, SPEC, TRI, on_target_desired(1.0))
        np.testing.assert_allclose(lq.a, 0.0, atol=1e-12)
        np.testing.assert_array_equal(lq.b, 0.0)
        C = SYS.C
        CtQC = C.T @ W.Q_B(2) @ C
        np.testing.assert_allclose(lq.Q[3], CtQC, atol=1e-12)

    def test_structure(self):
        xi = random_trajectory(1)
        d = DesiredOutput(gen_line([0, 0], [1, 0]), 2.0, 2)
        lq = assemble_lq_data(xi, W, SPEC, TRI, d)
        np.testing.assert_array_equal(lq.b, W.r_a * xi.u)
        np.testing.assert_array_equal(lq.S, 0.0)
        np.testing.assert_array_equal(lq.r1, 0.0)
        np.testing.assert_array_equal(lq.P1, 0.0)
        np.testing.assert_array_equal(lq.R[5], np.eye(6))
        # formation part of a has no velocity component
        C = SYS.C
        err = xi.x @ C.T - d(xi.t)
        np.testing.assert_allclose(lq.a[:, 6:], (err @ W.Q_B(2) @ C)[:, 6:], atol=1e-12)
        # formation Hessian only in the pp block
        CtQC = C.T @ W.Q_B(2) @ C
        np.testing.assert_allclose(lq.Q[:, 6:, :], np.broadcast_to(CtQC[6:, :], (xi.t.size, 6, 12)), atol=1e-14)

    def test_a_and_b_are_gradients(self):
        xi = random_trajectory(2)
        d = DesiredOutput(gen_line([0, 0], [1, 0.2]), 2.0, 2)
        lq = assemble_lq_data(xi, W, SPEC, TRI, d)
        for k in (0, 17, 60, xi.t.size - 1):
            fx = lambda x: float(instantaneous_cost(x, xi.u[k], xi.t[k], W, SPEC, TRI, d))
            fu = lambda u: float(instantaneous_cost(xi.x[k], u, xi.t[k], W, SPEC, TRI, d))
            ga, gb = central_gradient(fx, xi.x[k]), central_gradient(fu, xi.u[k])
            assert np.max(np.abs(ga - lq.a[k])) < 1e-5 * max(1.0, np.max(np.abs(ga)))
            assert np.max(np.abs(gb - lq.b[k])) < 1e-5 * max(1.0, np.max(np.abs(gb)))

    def test_safe_q_is_psd_everywhere(self):
        d = DesiredOutput(gen_line([0, 0], [1, 0]), 2.0, 2)
        for seed in range(3):
            xi = random_trajectory(seed)
            lq = assemble_lq_data(xi, W, SPEC, TRI, d, safe=True)
            assert min(np.linalg.eigvalsh(Q).min() for Q in lq.Q) >= -1e-8

    def test_tracking_block_psd_for_any_weights(self):
        C = SYS.C
        for qp, qv in ((0.0, 0.0), (0.0, 5.0), (100.0, 0.0), (3.0, 7.0)):
            Qb = CostWeights(q_p=qp, q_v=qv).Q_B(2)
            assert np.linalg.eigvalsh(C.T @ Qb @ C).min() >= -1e-12

    def test_exact_mode_can_be_indefinite(self):
        t = time_grid(1.0, 0.02)
        # agents 3 m apart repel
        x0 = pack_state([[0, 0], [3, 0], [1.5, 2.0]])
        xi = open_loop_rollout(np.zeros((t.size, 6)), t, SYS, x0)
        lq = assemble_lq_data(xi, W, SPEC, TRI, on_target_desired(1.0), safe=False)
        assert np.linalg.eigvalsh(lq.Q[0]).min() < -1e-3
