"""Footstep location and timing adaptation from the measured DCM.

The point-foot LIPM gives the DCM at the end of the step in closed form; with
``tau = exp(omega0 T)`` the landing condition becomes linear and the next
foothold ``u_T``, ``tau`` and the DCM offset ``b`` are found by a five-variable
QP that stays as close as possible to the nominal gait.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .config import GaitConfig
from .qp import QpProblem, QpStatus, solve


class Stance(str, enum.Enum):
    LEFT = "L"
    RIGHT = "R"

    @property
    def other(self) -> "Stance":
        return Stance.RIGHT if self is Stance.LEFT else Stance.LEFT

    @property
    def step_side(self) -> float:
        """Lateral direction of the next foothold: the swing foot is on the other side."""
        return -1.0 if self is Stance.LEFT else 1.0


class StepAdaptationError(RuntimeError):
    pass


class VelocityInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class NominalGait:
    L_nom: float
    W_nom: float  # signed, toward the swing side
    T_nom: float
    tau_nom: float
    b_nom: np.ndarray

    @property
    def step(self) -> np.ndarray:
        """Nominal foothold relative to the stance foot."""
        return np.array([self.L_nom, self.W_nom])


@dataclass(frozen=True)
class Stage1Inputs:
    xi_mea: np.ndarray
    u0: np.ndarray
    t: float
    stance: Stance


@dataclass(frozen=True)
class StepAdaptation:
    u_T: np.ndarray
    T_step: float
    b: np.ndarray
    objective: float
    tau: float
    status: QpStatus = QpStatus.OPTIMAL


def width_bounds(config: GaitConfig, stance: Stance) -> tuple[float, float]:
    if stance is Stance.RIGHT:
        return config.W_right_min, config.W_right_max
    return config.W_left_min, config.W_left_max


def compute_nominal_gait(v_des: float, config: GaitConfig, stance: Stance) -> NominalGait:
    """Nominal step for forward velocity ``v_des`` and its periodic DCM offsets.

    The offsets are the fixed points of the step-to-step DCM map
    ``b' = b exp(omega0 T) - dU``: constant in the sagittal plane and
    sign-alternating laterally.
    """
    T = config.T_nom
    L = v_des * T
    if not config.L_min <= L <= config.L_max:
        raise VelocityInfeasible(
            f"v_des={v_des} gives step length {L:.3f} outside [{config.L_min}, {config.L_max}]"
        )
    tau = math.exp(config.omega0 * T)
    W = stance.step_side * config.W_nom
    b = np.array([L / (tau - 1.0), -W / (1.0 + tau)])
    return NominalGait(L_nom=L, W_nom=W, T_nom=T, tau_nom=tau, b_nom=b)


def _tau_bounds(inputs: Stage1Inputs, config: GaitConfig) -> tuple[float, float]:
    w = config.omega0
    # the swing foot must land (T - T_ds) no earlier than the next control cycle
    T_lo = min(max(config.T_min, inputs.t + config.dt_s + config.T_ds), config.T_max)
    return math.exp(w * T_lo), math.exp(w * config.T_max)


def _weights(config: GaitConfig) -> np.ndarray:
    a1, a2, a3 = config.alpha1, config.alpha2, config.alpha3
    return np.array([a1, a1, a2, a3, a3])


def _targets(inputs: Stage1Inputs, nominal: NominalGait) -> np.ndarray:
    u_nom = np.asarray(inputs.u0, float) + nominal.step
    return np.array([u_nom[0], u_nom[1], nominal.tau_nom, nominal.b_nom[0], nominal.b_nom[1]])


def build_stage1_qp(
    inputs: Stage1Inputs, nominal: NominalGait, config: GaitConfig, omega0: float
) -> QpProblem:
    """QP over ``(u_T_x, u_T_y, tau, b_x, b_y)``."""
    w = _weights(config)
    c = _targets(inputs, nominal)
    H = np.diag(2.0 * w)
    f = -2.0 * w * c
    u0 = np.asarray(inputs.u0, float)
    rel = (np.asarray(inputs.xi_mea, float) - u0) * math.exp(-omega0 * inputs.t)
    A_eq = np.array(
        [
            [1.0, 0.0, -rel[0], 1.0, 0.0],
            [0.0, 1.0, -rel[1], 0.0, 1.0],
        ]
    )
    b_eq = u0.copy()
    w_lo, w_hi = width_bounds(config, inputs.stance)
    tau_lo, tau_hi = _tau_bounds(inputs, config)
    A_in = np.zeros((6, 5))
    A_in[0, 0], A_in[1, 0] = 1.0, -1.0
    A_in[2, 1], A_in[3, 1] = 1.0, -1.0
    A_in[4, 2], A_in[5, 2] = 1.0, -1.0
    b_in = np.array(
        [
            u0[0] + config.L_max,
            -(u0[0] + config.L_min),
            u0[1] + w_hi,
            -(u0[1] + w_lo),
            tau_hi,
            -tau_lo,
        ]
    )
    return QpProblem(H, f, A_eq, b_eq, A_in, b_in)


def adapt_step(inputs: Stage1Inputs, nominal: NominalGait, config: GaitConfig, warm_start=None) -> StepAdaptation:
    omega0 = config.omega0
    problem = build_stage1_qp(inputs, nominal, config, omega0)
    sol = solve(problem, warm_start)
    if sol.status is QpStatus.INFEASIBLE:
        raise StepAdaptationError("step adaptation QP is infeasible")
    x = sol.x_star
    deviation = x - _targets(inputs, nominal)
    objective = float(np.sum(_weights(config) * deviation**2))
    tau = float(x[2])
    return StepAdaptation(
        u_T=x[:2].copy(),
        T_step=math.log(tau) / omega0,
        b=x[3:].copy(),
        objective=objective,
        tau=tau,
        status=sol.status,
    )
