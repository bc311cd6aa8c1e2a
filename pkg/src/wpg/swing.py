"""Swing-foot trajectories re-planned every cycle toward the adapted foothold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TouchdownImminent(ValueError):
    """Raised when the requested landing time is not after the plan time."""


def _poly_fit(t0: float, conditions) -> np.ndarray:
    """Coefficients (ascending powers of ``t - t0``) meeting value/derivative conditions.

    ``conditions`` is a list of ``(time, derivative_order, value)``.
    """
    n = len(conditions)
    M = np.zeros((n, n))
    rhs = np.zeros(n)
    for row, (t, order, value) in enumerate(conditions):
        s = t - t0
        for k in range(order, n):
            coef = 1.0
            for d in range(order):
                coef *= k - d
            M[row, k] = coef * s ** (k - order)
        rhs[row] = value
    return np.linalg.solve(M, rhs)


def _poly_eval(coefs: np.ndarray, s: float, order: int = 0) -> float:
    out = 0.0
    for k in range(order, len(coefs)):
        coef = 1.0
        for d in range(order):
            coef *= k - d
        out += coefs[k] * coef * s ** (k - order)
    return out


@dataclass(frozen=True)
class SwingPlan:
    t0: float
    t_land: float
    horizontal: np.ndarray  # (2, 6) quintic coefficients per axis
    vertical: np.ndarray  # quartic before apex time, cubic after
    apex_height: float
    target: np.ndarray

    def position(self, t: float) -> np.ndarray:
        if t >= self.t_land:
            return np.array([self.target[0], self.target[1], 0.0])
        s = t - self.t0
        return np.array([_poly_eval(self.horizontal[0], s), _poly_eval(self.horizontal[1], s), _poly_eval(self.vertical, s)])

    def velocity(self, t: float) -> np.ndarray:
        if t >= self.t_land:
            return np.zeros(3)
        s = t - self.t0
        return np.array([_poly_eval(c, s, 1) for c in (*self.horizontal, self.vertical)])

    def acceleration(self, t: float) -> np.ndarray:
        if t >= self.t_land:
            return np.zeros(3)
        s = t - self.t0
        return np.array([_poly_eval(c, s, 2) for c in (*self.horizontal, self.vertical)])


def plan_swing(pos, vel, acc, u_T, t: float, T_step: float, apex_height: float, t_liftoff: float = 0.0) -> SwingPlan:
    """Plan from the current foot state at time ``t`` to land on ``u_T`` at ``T_step``.

    Horizontal axes use a quintic matching position, velocity and acceleration
    at both ends (zero velocity and acceleration on landing). The height rises
    to ``apex_height`` at the middle of the swing through a quartic and comes
    down with a cubic once the apex time has passed.
    """
    if T_step <= t:
        raise TouchdownImminent(f"landing time {T_step} is not after {t}")
    pos = np.asarray(pos, float)
    vel = np.asarray(vel, float)
    acc = np.asarray(acc, float)
    target = np.asarray(u_T, float)[:2]
    horizontal = np.array(
        [
            _poly_fit(
                t,
                [
                    (t, 0, pos[a]),
                    (t, 1, vel[a]),
                    (t, 2, acc[a]),
                    (T_step, 0, target[a]),
                    (T_step, 1, 0.0),
                    (T_step, 2, 0.0),
                ],
            )
            for a in range(2)
        ]
    )
    t_apex = t_liftoff + 0.5 * (T_step - t_liftoff)
    if t < t_apex - 1e-9:
        conditions = [(t, 0, pos[2]), (t, 1, vel[2]), (t_apex, 0, apex_height), (T_step, 0, 0.0), (T_step, 1, 0.0)]
    else:
        conditions = [(t, 0, pos[2]), (t, 1, vel[2]), (T_step, 0, 0.0), (T_step, 1, 0.0)]
    vertical = _poly_fit(t, conditions)
    return SwingPlan(t0=t, t_land=T_step, horizontal=horizontal, vertical=vertical, apex_height=apex_height, target=target)
