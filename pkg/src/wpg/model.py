"""LIPM-with-flywheel dynamics: DCM, CMP, ZMP output and exact discretization.

Every 2-D quantity (CoM, DCM, ZMP, CMP, footholds) is a numpy array of shape
``(2,)`` ordered (sagittal, lateral). The trunk is represented per axis too:
index 0 is pitch (acts on the sagittal CMP), index 1 is roll (lateral CMP).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# indices into the per-axis 5-state vector [xi, xi_dot, theta, theta_dot, theta_ddot]
XI, XI_DOT, THETA, THETA_DOT, THETA_DDOT = range(5)


def natural_frequency(g: float, h: float) -> float:
    if g <= 0 or h <= 0:
        raise ValueError(f"gravity and CoM height must be positive (g={g}, h={h})")
    return math.sqrt(g / h)


def dcm(x, x_dot, omega0: float):
    """Divergent component of motion ``x + x_dot / omega0``."""
    return x + x_dot / omega0


def cmp_location(z, tau_f, m: float, g: float):
    """Centroidal moment pivot for ZMP ``z`` and trunk torque ``tau_f``."""
    return z + tau_f / (m * g)


def zmp_output(xhat, omega0: float, j: float, m: float, g: float) -> float:
    """ZMP of one axis from its 5-state vector."""
    return xhat[XI] - xhat[XI_DOT] / omega0 - (j / (m * g)) * xhat[THETA_DDOT]


def zmp_row(omega0: float, j: float, m: float, g: float) -> np.ndarray:
    return np.array([1.0, -1.0 / omega0, 0.0, 0.0, -j / (m * g)])


def state_vector(xi, xi_dot, theta=0.0, theta_dot=0.0, theta_ddot=0.0) -> np.ndarray:
    return np.array([xi, xi_dot, theta, theta_dot, theta_ddot], dtype=float)


@dataclass(frozen=True)
class DiscreteModel:
    """Per-axis transition ``x[k+1] = A x[k] + B [xi_ddot, theta_dddot]``."""

    A: np.ndarray
    B: np.ndarray
    dt_s: float


def discretize(omega0: float, dt_s: float) -> DiscreteModel:
    """Exact zero-order-hold discretization for constant DCM acceleration and trunk jerk.

    ``omega0`` does not enter A or B (the ZMP row carries it); it is accepted so
    callers can pass the same parameter set everywhere.
    """
    if dt_s < 0:
        raise ValueError("dt_s must be non-negative")
    T = dt_s
    A = np.array(
        [
            [1.0, T, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, T, T * T / 2],
            [0.0, 0.0, 0.0, 1.0, T],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [T * T / 2, 0.0],
            [T, 0.0],
            [0.0, T**3 / 6],
            [0.0, T * T / 2],
            [0.0, T],
        ]
    )
    return DiscreteModel(A=A, B=B, dt_s=dt_s)


@dataclass(frozen=True)
class FlywheelPlant:
    """Point mass at constant height plus a trunk flywheel per horizontal axis."""

    com: np.ndarray
    com_vel: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray

    @classmethod
    def at_rest(cls, com) -> "FlywheelPlant":
        return cls(np.asarray(com, float), np.zeros(2), np.zeros(2), np.zeros(2))

    def dcm(self, omega0: float) -> np.ndarray:
        return dcm(self.com, self.com_vel, omega0)


def plant_step(
    state: FlywheelPlant,
    z,
    theta_ddot,
    push_accel,
    dt: float,
    *,
    omega0: float,
    m: float,
    g: float,
    j: float,
) -> FlywheelPlant:
    """Advance the plant by ``dt`` holding ZMP, trunk acceleration and push constant.

    The CoM obeys ``x_dd = omega0^2 (x - x_cmp) + push_accel`` with
    ``x_cmp = z + j theta_dd / (m g)``; both it and the trunk are integrated in
    closed form.
    """
    z = np.asarray(z, float)
    theta_ddot = np.asarray(theta_ddot, float)
    push_accel = np.asarray(push_accel, float)
    pivot = cmp_location(z, j * theta_ddot, m, g) - push_accel / omega0**2
    wt = omega0 * dt
    c, s = math.cosh(wt), math.sinh(wt)
    rel = state.com - pivot
    com = pivot + rel * c + state.com_vel * (s / omega0)
    com_vel = rel * (omega0 * s) + state.com_vel * c
    theta = state.theta + state.theta_dot * dt + 0.5 * theta_ddot * dt * dt
    theta_dot = state.theta_dot + theta_ddot * dt
    return FlywheelPlant(com, com_vel, theta, theta_dot)
