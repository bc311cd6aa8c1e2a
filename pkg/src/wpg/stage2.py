"""Receding-horizon regeneration of the DCM and trunk trajectories, per axis.

The horizon covers the rest of the current step. Inputs are the DCM
acceleration and trunk jerk held over each sample; the QP trades ZMP centring,
input effort and trunk rate against reaching the desired DCM at step end,
subject to trunk-acceleration, trunk-angle and support-interval limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import GaitConfig
from .model import DiscreteModel, discretize, zmp_row
from .qp import QpFactor, QpProblem, QpStatus, solve

# constraint blocks, N rows each, in A_in order; the trunk-stopping blocks
# follow, two per chord
BLOCKS = ("theta_ddot_hi", "theta_ddot_lo", "theta_hi", "theta_lo", "z_hi", "z_lo")
STOP_CHORDS = 4
# the stopping rows share one slack variable, the last QP variable, priced
# high enough that they hold whenever the hard limits allow
STOP_SLACK_WEIGHT = 1e12


def horizon_length(T_step: float, t: float, dt_s: float) -> int:
    # the step ends on the cycle nearest to T_step
    return max(1, math.ceil((T_step - t) / dt_s - 0.5))


@dataclass(frozen=True)
class PredictionModel:
    """Stacked responses over N samples: ``Y = Ps @ xhat + Pu @ U``.

    ``Ps[c]`` and ``Pu[c]`` hold state component ``c`` (0..4: xi, xi_dot,
    theta, theta_dot, theta_ddot) and index 5 holds the ZMP. ``U`` stacks the N
    DCM accelerations followed by the N trunk jerks.
    """

    Ps: np.ndarray  # (6, N, 5)
    Pu: np.ndarray  # (6, N, 2N)
    N: int

    P1s = property(lambda self: self.Ps[0])
    P2s = property(lambda self: self.Ps[1])
    P3s = property(lambda self: self.Ps[2])
    P4s = property(lambda self: self.Ps[3])
    P5s = property(lambda self: self.Ps[4])
    Pzs = property(lambda self: self.Ps[5])
    P1u = property(lambda self: self.Pu[0])
    P2u = property(lambda self: self.Pu[1])
    P3u = property(lambda self: self.Pu[2])
    P4u = property(lambda self: self.Pu[3])
    P5u = property(lambda self: self.Pu[4])
    Pzu = property(lambda self: self.Pu[5])

    def predict(self, xhat, U) -> np.ndarray:
        """All six stacked trajectories, shape (6, N)."""
        return self.Ps @ np.asarray(xhat, float) + self.Pu @ np.asarray(U, float)


def build_prediction(model: DiscreteModel, omega0: float, j: float, m: float, g: float, N: int) -> PredictionModel:
    if N < 1:
        raise ValueError("horizon must be at least one sample")
    A, B = model.A, model.B
    powers = np.empty((N + 1, 5, 5))
    powers[0] = np.eye(5)
    for k in range(1, N + 1):
        powers[k] = A @ powers[k - 1]
    gamma = powers[:N] @ B  # A^k B, (N, 5, 2)

    # row k (state at sample k+1) depends on input i <= k through A^(k-i) B
    lag = np.arange(N)[:, None] - np.arange(N)[None, :]
    mask = lag >= 0
    G = np.where(mask[..., None, None], gamma[np.clip(lag, 0, None)], 0.0)  # (N, N, 5, 2)
    Pu = np.concatenate([G[..., 0], G[..., 1]], axis=1).transpose(2, 0, 1)  # (5, N, 2N)
    Ps = powers[1:].transpose(1, 0, 2)  # (5, N, 5)

    C = zmp_row(omega0, j, m, g)
    Ps = np.concatenate([Ps, np.tensordot(C, Ps, axes=1)[None]], axis=0)
    Pu = np.concatenate([Pu, np.tensordot(C, Pu, axes=1)[None]], axis=0)
    return PredictionModel(Ps=Ps, Pu=Pu, N=N)


def desired_terminal_dcm(u_T, b_nom) -> np.ndarray:
    return np.asarray(u_T, float) + np.asarray(b_nom, float)


@dataclass(frozen=True)
class Stage2Inputs:
    xhat: np.ndarray
    xi_des: float
    z_ref: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray

    @property
    def N(self) -> int:
        return len(self.z_ref)


@dataclass
class TrajectoryPlan:
    xi_traj: np.ndarray
    xi_dot_traj: np.ndarray
    theta_traj: np.ndarray
    theta_dot_traj: np.ndarray
    theta_ddot_traj: np.ndarray
    z_traj: np.ndarray
    U: np.ndarray
    u0_cmd: np.ndarray
    objective: float
    status: QpStatus
    active_set: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def pivot_gain(omega0: float, dt_s: float) -> float:
    """Gain ``kappa`` for which ``xi_ddot = kappa * xi_dot`` grows the DCM velocity by ``exp(omega0 dt_s)`` per sample."""
    return math.expm1(omega0 * dt_s) / dt_s


def sampled_dcm_rate(omega0: float, dt_s: float) -> float:
    """Rate ``w_d`` such that ``xi_dot = w_d (xi - p)`` with ``xi_ddot = kappa xi_dot`` advances
    the sampled DCM exactly as the exponential divergence about a fixed pivot ``p``.
    """
    return 2.0 / dt_s * math.tanh(0.5 * omega0 * dt_s)


def cost_weights(config: GaitConfig) -> tuple:
    """Weights of the ZMP, DCM-accel, jerk, trunk-rate, terminal and trunk-angle terms."""
    scaled = tuple(getattr(config, f"beta{i}") * getattr(config, f"beta{i}_scale") for i in range(1, 6))
    return scaled + (config.beta_theta,)


def _excess_accel(pred: PredictionModel, kappa: float) -> np.ndarray:
    """Rows mapping U to ``xi_ddot_i - kappa * xi_dot_i`` (state part handled separately).

    The excess is zero along the natural divergence about a fixed pivot, so an
    unperturbed step on the footstep planner's orbit costs nothing and only
    departures from it are penalized.
    """
    N = pred.N
    E = np.zeros((N, 2 * N))
    E[:, :N] = np.eye(N)
    E[1:] -= kappa * pred.P2u[:-1]
    return E


def _hessian(pred: PredictionModel, config: GaitConfig) -> np.ndarray:
    N = pred.N
    Pz, P4 = pred.Pzu, pred.P4u
    p_end = pred.P1u[-1]
    E = _excess_accel(pred, pivot_gain(config.omega0, config.dt_s))
    b1, b2, b3, b4, b5, bt = cost_weights(config)
    be, rate_time = config.beta_trunk_end, 1.0 / config.omega0
    H = (
        b1 * Pz.T @ Pz
        + b2 * E.T @ E
        + b4 * P4.T @ P4
        + b5 * np.outer(p_end, p_end)
        + bt * pred.P3u.T @ pred.P3u
        + be * np.outer(pred.P3u[-1], pred.P3u[-1])
        + be * rate_time**2 * np.outer(pred.P4u[-1], pred.P4u[-1])
    )
    H[np.arange(N, 2 * N), np.arange(N, 2 * N)] += b3
    H = np.pad(H, ((0, 1), (0, 1)))
    H[-1, -1] = STOP_SLACK_WEIGHT
    return 2.0 * H


def stopping_chords(config: GaitConfig) -> list[tuple[float, float]]:
    """Pairs ``(s, r)``: ``theta + s * theta_dot <= theta_max + r`` keeps the trunk stoppable.

    A trunk at ``(theta, theta_dot)`` can be braked before ``theta_max`` with
    deceleration ``a`` iff ``theta + theta_dot**2 / (2a) <= theta_max`` for
    ``theta_dot >= 0``. That set is convex, so chords between points on its
    boundary cut out a slightly smaller polygon inside it. The mirrored rows
    guard ``theta_min``.
    """
    a = config.trunk_brake_fraction * config.theta_ddot_max
    v_top = math.sqrt(2.0 * a * (config.theta_max - config.theta_min))
    v = np.linspace(0.0, v_top, STOP_CHORDS + 1)
    return [((v0 + v1) / (2.0 * a), v0 * v1 / (2.0 * a)) for v0, v1 in zip(v[:-1], v[1:])]


def _stopping_rows(config: GaitConfig):
    """``(c_theta, c_rate, bound)`` for rows ``c_theta*theta + c_rate*theta_dot <= bound``."""
    rows = []
    for slope, extra in stopping_chords(config):
        rows.append((1.0, slope, config.theta_max + extra))
        rows.append((-1.0, -slope, -config.theta_min + extra))
    return rows


def _stop_rhs(b: np.ndarray) -> np.ndarray:
    # the first sample is all but fixed by the measured state, so plant
    # mismatch there would make the QP infeasible; the braking margin lets
    # later samples pull the trunk back inside
    b = b.copy()
    b[0] = np.inf
    return b


def _constraint_matrix(pred: PredictionModel, config: GaitConfig) -> np.ndarray:
    P5, P3, Pz = pred.P5u, pred.P3u, pred.Pzu
    stop = [c3 * P3 + c4 * pred.P4u for c3, c4, _ in _stopping_rows(config)]
    hard = np.vstack([P5, -P5, P3, -P3, Pz, -Pz])
    soft = np.vstack(stop)
    return np.block([[hard, np.zeros((len(hard), 1))], [soft, -np.ones((len(soft), 1))]])


def _linear_terms(inputs: Stage2Inputs, pred: PredictionModel, config: GaitConfig):
    x = np.asarray(inputs.xhat, float)
    free = pred.Ps @ x  # (6, N) zero-input responses
    kappa = pivot_gain(config.omega0, config.dt_s)
    z_err = free[5] - inputs.z_ref
    end_err = free[0, -1] - inputs.xi_des
    # zero-input excess acceleration: -kappa times the DCM velocity at each sample start
    accel_err = -kappa * np.concatenate([[x[1]], free[1, :-1]])
    E = _excess_accel(pred, kappa)
    b1, b2, b3, b4, b5, bt = cost_weights(config)
    be, rate_time = config.beta_trunk_end, 1.0 / config.omega0
    f = 2.0 * (
        b1 * pred.Pzu.T @ z_err
        + b2 * E.T @ accel_err
        + b4 * pred.P4u.T @ free[3]
        + b5 * pred.P1u[-1] * end_err
        + bt * pred.P3u.T @ free[2]
        + be * pred.P3u[-1] * free[2, -1]
        + be * rate_time**2 * pred.P4u[-1] * free[3, -1]
    )
    f = np.append(f, 0.0)
    const = (
        b1 * z_err @ z_err
        + b2 * accel_err @ accel_err
        + b4 * free[3] @ free[3]
        + b5 * end_err**2
        + bt * free[2] @ free[2]
        + be * (free[2, -1] ** 2 + (rate_time * free[3, -1]) ** 2)
    )
    ddmax = config.theta_ddot_max
    b_in = np.concatenate(
        [
            ddmax - free[4],
            ddmax + free[4],
            config.theta_max - free[2],
            free[2] - config.theta_min,
            np.asarray(inputs.z_hi, float) - free[5],
            free[5] - np.asarray(inputs.z_lo, float),
            *(_stop_rhs(r - c3 * free[2] - c4 * free[3]) for c3, c4, r in _stopping_rows(config)),
        ]
    )
    return f, const, b_in


def build_stage2_qp(inputs: Stage2Inputs, pred: PredictionModel, config: GaitConfig) -> QpProblem:
    if inputs.N != pred.N:
        raise ValueError(f"inputs span {inputs.N} samples but the prediction has {pred.N}")
    f, _, b_in = _linear_terms(inputs, pred, config)
    return QpProblem(_hessian(pred, config), f, A_in=_constraint_matrix(pred, config), b_in=b_in)


def _input_scale(N: int, config: GaitConfig) -> np.ndarray:
    """Column scaling ``U = d * V`` that gives the jerk and slack columns unit weight.

    Their weights sit orders of magnitude away from the others; solving in the
    scaled variables keeps the Hessian well conditioned.
    """
    b3 = cost_weights(config)[2]
    jerk = 1.0 / math.sqrt(b3) if b3 > 0 else 1.0
    return np.concatenate([np.ones(N), np.full(N, jerk), [1.0 / math.sqrt(STOP_SLACK_WEIGHT)]])


def _scaled(problem: QpProblem, d: np.ndarray) -> QpProblem:
    return QpProblem(problem.H * np.outer(d, d), problem.f * d, A_in=problem.A_in * d, b_in=problem.b_in)


def _plan(inputs, pred, sol, const, d) -> TrajectoryPlan:
    N = pred.N
    if sol.status is QpStatus.INFEASIBLE:
        U = np.zeros(2 * N)
    else:
        U = (sol.x_star * d)[: 2 * N]
    Y = pred.predict(inputs.xhat, U)
    return TrajectoryPlan(
        xi_traj=Y[0],
        xi_dot_traj=Y[1],
        theta_traj=Y[2],
        theta_dot_traj=Y[3],
        theta_ddot_traj=Y[4],
        z_traj=Y[5],
        U=U,
        u0_cmd=np.array([U[0], U[N]]),
        objective=sol.objective + const,
        status=sol.status,
        active_set=sol.active_set,
    )


def regenerate(inputs: Stage2Inputs, pred: PredictionModel, config: GaitConfig, warm_start=None) -> TrajectoryPlan:
    d = _input_scale(pred.N, config)
    problem = _scaled(build_stage2_qp(inputs, pred, config), d)
    _, const, _ = _linear_terms(inputs, pred, config)
    sol = solve(problem, warm_start)
    return _plan(inputs, pred, sol, const, d)


def shift_active_set(active, N_old: int, N_new: int, shift: int = 1) -> list:
    """Map active rows of a horizon-``N_old`` QP onto the next cycle's horizon."""
    out = []
    for row in active:
        block, i = divmod(int(row), N_old)
        i -= shift
        if 0 <= i < N_new:
            out.append(block * N_new + i)
    return out


class Regenerator:
    """Stage-2 solver that caches prediction models and factorizations per horizon.

    The Hessian and constraint matrix depend only on N, so for a fixed config
    every cycle after the first with a given N only builds right-hand sides.
    """

    def __init__(self, config: GaitConfig):
        self.config = config
        self.model = discretize(config.omega0, config.dt_s)
        self._cache: dict[int, tuple] = {}

    def prediction(self, N: int) -> PredictionModel:
        return self._entry(N)[0]

    def _entry(self, N: int):
        if N not in self._cache:
            c = self.config
            # output row in sampled-data form: with xi_dot = w_d (xi - p) the
            # ZMP row returns the pivot p held over the cycle
            w_d = sampled_dcm_rate(c.omega0, c.dt_s)
            pred = build_prediction(self.model, w_d, c.j, c.m, c.g, N)
            d = _input_scale(N, c)
            H = _hessian(pred, c) * np.outer(d, d)
            A_in = _constraint_matrix(pred, c) * d
            self._cache[N] = (pred, d, H, A_in, QpFactor(H, np.zeros((0, 2 * N + 1)), A_in))
        return self._cache[N]

    def regenerate(self, inputs: Stage2Inputs, warm_start: Optional[list] = None) -> TrajectoryPlan:
        pred, d, H, A_in, factor = self._entry(inputs.N)
        f, const, b_in = _linear_terms(inputs, pred, self.config)
        problem = QpProblem(H, f * d, A_in=A_in, b_in=b_in)
        sol = solve(problem, warm_start, factor=factor)
        return _plan(inputs, pred, sol, const, d)
