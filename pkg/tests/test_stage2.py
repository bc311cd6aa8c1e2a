import math

import numpy as np
import pytest

from wpg.config import GaitConfig
from wpg.model import discretize, zmp_row
from wpg.qp import QpProblem, solve
from wpg.stage2 import (
    Regenerator,
    Stage2Inputs,
    build_prediction,
    desired_terminal_dcm,
    horizon_length,
    pivot_gain,
    sampled_dcm_rate,
    shift_active_set,
)

CFG = GaitConfig()
W = CFG.omega0
DT = CFG.dt_s
W_D = sampled_dcm_rate(W, DT)
RHO = math.exp(W * DT)


@pytest.mark.parametrize("T,t,N", [(0.65, 0.0, 65), (0.65, 0.645, 1), (0.3, 0.1, 20), (0.65, 0.649, 1)])
def test_horizon_length(T, t, N):
    assert horizon_length(T, t, DT) == N


def test_prediction_one_step():
    d = discretize(W, DT)
    pred = build_prediction(d, W, CFG.j, CFG.m, CFG.g, 1)
    np.testing.assert_array_equal(pred.P1s[0], d.A[0])
    np.testing.assert_array_equal(pred.P1u[0], d.B[0])


def test_prediction_constant_dcm():
    pred = build_prediction(discretize(W, DT), W, CFG.j, CFG.m, CFG.g, 2)
    Y = pred.predict([0.1, 0, 0, 0, 0], np.zeros(4))
    np.testing.assert_allclose(Y[0], [0.1, 0.1], atol=1e-15)


def test_prediction_matches_recursion():
    d = discretize(W, DT)
    C = zmp_row(W, CFG.j, CFG.m, CFG.g)
    rng = np.random.default_rng(0)
    for N in (1, 7, 40):
        pred = build_prediction(d, W, CFG.j, CFG.m, CFG.g, N)
        x = rng.normal(size=5)
        U = rng.normal(size=2 * N)
        Y = pred.predict(x, U)
        for k in range(N):
            x = d.A @ x + d.B @ np.array([U[k], U[N + k]])
            np.testing.assert_allclose(Y[:5, k], x, atol=1e-12)
            assert Y[5, k] == pytest.approx(C @ x, abs=1e-12)


def test_desired_terminal_dcm():
    np.testing.assert_allclose(
        desired_terminal_dcm([0.325, 0.15], [0.03719, -0.013968]), [0.36219, 0.136032], atol=1e-12
    )
    np.testing.assert_array_equal(desired_terminal_dcm([0.1, 0.2], [0.0, 0.0]), [0.1, 0.2])
    np.testing.assert_allclose(desired_terminal_dcm([0.0, 0.15], [0.0, -0.013968]), [0.0, 0.136032])


def test_trunk_acceleration_limit():
    assert CFG.theta_ddot_max == 18.75


def _support(N, centre, half):
    return np.full(N, centre), np.full(N, centre - half), np.full(N, centre + half)


def test_orbit_leaves_flywheel_unused():
    regen = Regenerator(CFG)
    p, xi0, N = 0.02, 0.09, 50
    z_ref, lo, hi = _support(N, p, 0.05)
    xhat = np.array([xi0, W_D * (xi0 - p), 0.0, 0.0, 0.0])
    plan = regen.regenerate(Stage2Inputs(xhat, p + (xi0 - p) * RHO**N, z_ref, lo, hi))
    assert plan.ok
    assert np.linalg.norm(plan.U[N:]) < 1e-6
    assert np.max(np.abs(plan.theta_traj)) < 1e-9
    np.testing.assert_allclose(plan.z_traj, z_ref, atol=1e-9)


def test_goal_state_needs_no_input():
    regen = Regenerator(CFG)
    z_ref, lo, hi = _support(30, 0.1, 0.05)
    plan = regen.regenerate(Stage2Inputs(np.array([0.1, 0.0, 0.0, 0.0, 0.0]), 0.1, z_ref, lo, hi))
    assert np.max(np.abs(plan.U)) < 1e-9
    assert plan.objective == pytest.approx(0.0, abs=1e-12)


# trunk locked: its acceleration limit is ~1e-13 rad/s^2
LOCKED = CFG.replace(tau_max=1e-12)


def test_point_support_pins_zmp():
    regen = Regenerator(LOCKED)
    p, N = 0.0, 40
    z_ref = np.full(N, p)
    xi0 = 0.03
    xhat = np.array([xi0, W_D * (xi0 - p), 0.0, 0.0, 0.0])
    plan = regen.regenerate(Stage2Inputs(xhat, 0.0, z_ref, z_ref, z_ref))
    assert plan.ok
    np.testing.assert_allclose(plan.z_traj, p, atol=1e-9)
    # the DCM diverges from the pivot as the point-foot model says
    np.testing.assert_allclose(plan.xi_traj, p + (xi0 - p) * RHO ** np.arange(1, N + 1), atol=1e-9)


def _pushed_inputs(rng, N):
    xi = float(rng.uniform(-0.1, 0.1))
    xhat = np.array([xi, float(rng.uniform(-0.6, 0.6)), float(rng.uniform(-0.2, 0.2)), float(rng.uniform(-1, 1)), 0.0])
    z_ref, lo, hi = _support(N, 0.0, 0.05)
    return Stage2Inputs(xhat, float(rng.uniform(-0.1, 0.1)), z_ref, lo, hi)


def test_plans_are_consistent_and_feasible():
    regen = Regenerator(CFG)
    d = discretize(W, DT)
    C = zmp_row(W_D, CFG.j, CFG.m, CFG.g)
    rng = np.random.default_rng(1)
    for _ in range(30):
        N = int(rng.integers(5, 66))
        inputs = _pushed_inputs(rng, N)
        plan = regen.regenerate(inputs)
        assert plan.ok
        x = inputs.xhat.copy()
        for k in range(N):
            x = d.A @ x + d.B @ np.array([plan.U[k], plan.U[N + k]])
            traj = (plan.xi_traj, plan.xi_dot_traj, plan.theta_traj, plan.theta_dot_traj, plan.theta_ddot_traj)
            np.testing.assert_allclose([t[k] for t in traj], x, atol=1e-9)
            assert plan.z_traj[k] == pytest.approx(C @ x, abs=1e-9)
        assert np.all(np.abs(plan.theta_ddot_traj) <= 18.75 + 1e-9)
        assert np.all(np.abs(plan.theta_traj) <= math.pi / 3 + 1e-9)
        assert np.all(plan.z_traj >= inputs.z_lo - 1e-9) and np.all(plan.z_traj <= inputs.z_hi + 1e-9)


def test_warm_start_reproduces_cold_plan():
    regen = Regenerator(CFG)
    rng = np.random.default_rng(2)
    for _ in range(20):
        inputs = _pushed_inputs(rng, 40)
        cold = regen.regenerate(inputs)
        hot = regen.regenerate(inputs, warm_start=list(cold.active_set))
        np.testing.assert_allclose(hot.U, cold.U, atol=1e-9, rtol=1e-9)


def test_zero_flywheel_matches_cop_only_mpc():
    """Locked trunk: the ZMP plan equals a DCM-acceleration-only QP built from scratch."""
    config = LOCKED.replace(beta3=0.0, beta4=0.0, beta_theta=0.0, beta_trunk_end=0.0)
    regen = Regenerator(config)
    kappa = pivot_gain(W, DT)
    b1, b2, b5 = config.beta1 * config.beta1_scale, config.beta2 * config.beta2_scale, config.beta5 * config.beta5_scale
    rng = np.random.default_rng(3)
    for _ in range(10):
        N = int(rng.integers(5, 40))
        xi = float(rng.uniform(-0.05, 0.05))
        p = float(rng.uniform(-0.03, 0.03))
        xi_dot = W_D * (xi - p) + float(rng.uniform(-0.3, 0.3))
        xi_des = float(rng.uniform(-0.05, 0.05))
        z_ref, lo, hi = _support(N, 0.0, 0.05)
        plan = regen.regenerate(Stage2Inputs(np.array([xi, xi_dot, 0.0, 0.0, 0.0]), xi_des, z_ref, lo, hi))

        # affine maps of the N accelerations, built sample by sample
        x0 = np.zeros(N + 1)
        v0 = np.zeros(N + 1)
        X = np.zeros((N + 1, N))
        V = np.zeros((N + 1, N))
        x0[0], v0[0] = xi, xi_dot
        for k in range(N):
            x0[k + 1] = x0[k] + DT * v0[k]
            X[k + 1] = X[k] + DT * V[k]
            X[k + 1, k] += 0.5 * DT * DT
            v0[k + 1] = v0[k]
            V[k + 1] = V[k]
            V[k + 1, k] += DT
        Z, z0 = X[1:] - V[1:] / W_D, x0[1:] - v0[1:] / W_D
        # excess acceleration a_k - kappa * v_k
        Ex, e0 = np.eye(N) - kappa * V[:-1], -kappa * v0[:-1]
        H = 2 * (b1 * Z.T @ Z + b2 * Ex.T @ Ex + b5 * np.outer(X[-1], X[-1]))
        f = 2 * (b1 * Z.T @ (z0 - z_ref) + b2 * Ex.T @ e0 + b5 * X[-1] * (x0[-1] - xi_des))
        A_in = np.vstack([Z, -Z])
        b_in = np.concatenate([hi - z0, z0 - lo])
        ref = solve(QpProblem(H, f, A_in=A_in, b_in=b_in))
        np.testing.assert_allclose(plan.z_traj, Z @ ref.x_star + z0, atol=1e-6)


def test_shift_active_set():
    # rows are blocks of N; shifting drops the first sample of each block
    assert shift_active_set([0, 3, 5, 9], 5, 5) == [2, 8]
    assert shift_active_set([4, 9], 5, 4) == [3, 7]
    assert shift_active_set([1, 6], 5, 5, shift=0) == [1, 6]
