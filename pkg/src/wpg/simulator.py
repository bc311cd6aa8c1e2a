"""Closed-loop push-recovery simulation of the two-stage controller.

Each control cycle: measure the DCM, adapt the next step (single support
only), regenerate the DCM/trunk plan per axis (full mode) or pin the ZMP on the
stance foot (stage-1-only mode), integrate the plant over one cycle with any
active push, then advance the gait phase.

A step of adapted duration ``T_step`` consists of single support until the
swing foot lands at ``T_step - T_ds`` and double support until ``T_step``, when
the stance switches to the landed foot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import GaitConfig
from .model import FlywheelPlant, cmp_location, dcm, plant_step
from .qp import QpStatus
from .stage1 import NominalGait, Stage1Inputs, Stance, adapt_step, compute_nominal_gait
from .stage2 import (
    Regenerator,
    Stage2Inputs,
    desired_terminal_dcm,
    horizon_length,
    sampled_dcm_rate,
    shift_active_set,
)
from .swing import plan_swing

EPS_T = 1e-8  # tolerance on push start and end times


class Mode(str, enum.Enum):
    STAGE1_ONLY = "stage1"
    FULL = "full"


class Phase(str, enum.Enum):
    SINGLE = "SS"
    DOUBLE = "DS"


@dataclass(frozen=True)
class PushEvent:
    """Constant horizontal force; ``psi`` is measured counterclockwise from +x."""

    t_start: float
    duration: float
    force: float
    psi: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("push duration must be positive")
        if self.force < 0:
            raise ValueError("push force must be non-negative")

    def active(self, t: float) -> bool:
        return self.t_start - EPS_T <= t < self.t_start + self.duration - EPS_T

    def accel(self, m: float) -> np.ndarray:
        return self.force / m * np.array([math.cos(self.psi), math.sin(self.psi)])


@dataclass
class PhaseState:
    phase: Phase
    stance: Stance
    t_in_phase: float
    step_index: int


@dataclass(frozen=True)
class FailureStatus:
    ok: bool
    reason: Optional[str] = None

    def __str__(self):
        return "Ok" if self.ok else f"Failed({self.reason})"


OK = FailureStatus(True)

# a step counts as settled when it ends this close to the nominal orbit
SETTLE_DCM = 5e-3
SETTLE_THETA = 1e-2
SETTLE_RATE = 5e-2


def step_settled(step: dict) -> bool:
    return (
        np.max(np.abs(step["dcm_offset"] - step["b_nom"])) < SETTLE_DCM
        and np.max(np.abs(step["theta"])) < SETTLE_THETA
        and np.max(np.abs(step["theta_dot"])) < SETTLE_RATE
    )

_COLUMNS = (
    "t", "com", "com_vel", "dcm", "dcm_vel", "zmp", "cmp", "theta", "theta_dot", "theta_ddot",
    "theta_ddot_cmd", "swing", "stance", "phase", "u0", "u_T", "T_step", "b", "t_step", "step_index",
    "qp1_status", "qp2_status", "stage1_objective", "touchdown",
)


class SimLog:
    """Per-cycle record of the closed loop.

    Rows are appended as lists while the simulation runs; ``finalize`` turns the
    numeric columns into arrays. ``steps`` holds one summary per completed step.
    ``theta_ddot`` is the trunk acceleration the plant receives over the cycle,
    the mean of the planned ramp; ``theta_ddot_cmd`` is the planned value the
    ramp reaches at the end of the cycle.
    """

    numeric = ("t", "com", "com_vel", "dcm", "dcm_vel", "zmp", "cmp", "theta", "theta_dot",
               "theta_ddot", "theta_ddot_cmd", "swing", "u0", "u_T", "T_step", "b", "t_step", "step_index",
               "stage1_objective", "touchdown")

    def __init__(self, config: GaitConfig, v_des: float, mode: Mode, pushes: Sequence[PushEvent]):
        self.config = config
        self.v_des = v_des
        self.mode = mode
        self.pushes = list(pushes)
        self.columns = {name: [] for name in _COLUMNS}
        self.steps: list[dict] = []
        self.status: FailureStatus = OK
        self.failure_time: Optional[float] = None
        self.settled_time: Optional[float] = None

    def append(self, **row):
        for name in _COLUMNS:
            self.columns[name].append(row[name])

    def __len__(self):
        return len(self.columns["t"])

    def __getattr__(self, name):
        columns = self.__dict__.get("columns")
        if columns is not None and name in columns:
            return columns[name]
        raise AttributeError(name)

    def finalize(self) -> "SimLog":
        for name in self.numeric:
            self.columns[name] = np.asarray(self.columns[name], dtype=float)
        return self


def support_interval(phase: Phase, stance_pose, other_foot_pose, config: GaitConfig, axis: int):
    """Extent of the support polygon along ``axis`` (0 sagittal, 1 lateral)."""
    half = 0.5 * (config.foot_length if axis == 0 else config.foot_width)
    s = float(stance_pose[axis])
    if phase is Phase.SINGLE:
        return s - half, s + half
    o = float(other_foot_pose[axis])
    return min(s, o) - half, max(s, o) + half


def detect_failure(log: SimLog, config: GaitConfig) -> FailureStatus:
    """Check the tail of ``log`` for QP infeasibility, DCM divergence or foot collision."""
    if not len(log):
        return OK
    n = config.infeasible_cycles
    if len(log) >= n:
        for key in ("qp1_status", "qp2_status"):
            tail = log.columns[key][-n:]
            if all(s == QpStatus.INFEASIBLE.value for s in tail):
                return FailureStatus(False, f"{key[:3]} infeasible for {n} cycles")
    xi = np.asarray(log.columns["dcm"][-1])
    u0 = np.asarray(log.columns["u0"][-1])
    if not np.all(np.isfinite(xi)) or np.linalg.norm(xi - u0) > config.dcm_excursion_max:
        return FailureStatus(False, "DCM divergence")
    if log.columns["touchdown"][-1]:
        stance = Stance(log.columns["stance"][-1])
        width = (log.columns["u_T"][-1][1] - u0[1]) * stance.step_side
        if width < config.collision_margin - 1e-12:
            return FailureStatus(False, "feet collision")
    return OK


def periodic_start(config: GaitConfig, nominal: NominalGait, u0) -> tuple[FlywheelPlant, np.ndarray]:
    """Plant state and swing-foot position at the start of a step on the nominal orbit.

    The DCM starts where the point-foot orbit needs it; the CoM is placed on
    its own periodic solution (same offset every step sagittally, mirrored
    laterally).
    """
    w = config.omega0
    T = nominal.T_nom
    tau = nominal.tau_nom
    step = nominal.step
    xi_rel = (step + nominal.b_nom) / tau
    c1 = 0.5 * xi_rel
    sign = np.array([1.0, -1.0])
    c2 = (sign * c1 - c1 * tau + step) / (1.0 / tau - sign)
    com = np.asarray(u0, float) + c1 + c2
    com_vel = w * (c1 - c2)
    plant = FlywheelPlant(com=com, com_vel=com_vel, theta=np.zeros(2), theta_dot=np.zeros(2))
    swing = np.array([u0[0] - step[0], u0[1] + step[1], 0.0])
    return plant, swing


def initial_stance_foot(config: GaitConfig, stance: Stance) -> np.ndarray:
    return np.array([0.0, -0.5 * stance.step_side * config.W_nom])


def _push_accel(pushes: Iterable[PushEvent], t: float, m: float) -> np.ndarray:
    a = np.zeros(2)
    for push in pushes:
        if push.active(t):
            a += push.accel(m)
    return a


def run_closed_loop(
    config: GaitConfig,
    v_des: float,
    pushes: Sequence[PushEvent] = (),
    mode: Mode = Mode.FULL,
    t_end: float = 10.0,
    *,
    start_stance: Stance = Stance.LEFT,
    stop_on_failure: bool = True,
    stop_when_settled: int = 0,
) -> SimLog:
    """Simulate the closed loop from the periodic orbit for ``t_end`` seconds.

    With ``stop_when_settled = k > 0`` the run ends early, as recovered, once
    ``k`` consecutive steps after the last push have ended settled.
    """
    mode = Mode(mode)
    w, dt = config.omega0, config.dt_s
    w_d = sampled_dcm_rate(w, dt)
    rho = math.exp(w * dt)
    m, g, j = config.m, config.g, config.j
    log = SimLog(config, v_des, mode, pushes)

    stance = start_stance
    u0 = initial_stance_foot(config, stance)
    nominal = compute_nominal_gait(v_des, config, stance)
    plant, swing_pos = periodic_start(config, nominal, u0)
    swing_vel = np.zeros(3)
    swing_acc = np.zeros(3)
    cmp_prev = u0.copy()
    thdd_prev = np.zeros(2)
    # trunk acceleration at the end of the last planned ramp; the plant
    # receives each ramp's mean
    thdd_model = np.zeros(2)
    regen = Regenerator(config) if mode is Mode.FULL else None
    warm2: list = [None, None]
    prev_N = [0, 0]

    phase = Phase.SINGLE
    k_step = 0
    step_index = 0
    adaptation = None
    n_cycles = int(round(t_end / dt))
    pushes_over = max((p.t_start + p.duration for p in log.pushes), default=0.0)
    settled_run = 0

    for k in range(n_cycles):
        t = k * dt
        ts = k_step * dt
        xi = plant.dcm(w)

        if phase is Phase.SINGLE:
            adaptation = adapt_step(Stage1Inputs(xi, u0.copy(), ts, stance), nominal, config)
            qp1 = adaptation.status.value
        else:
            qp1 = "frozen"
        u_T, T_step = adaptation.u_T, adaptation.T_step
        t_land = T_step - config.T_ds

        if mode is Mode.STAGE1_ONLY:
            z = u0.copy()
            thdd = np.zeros(2)
            qp2 = "off"
        else:
            z = np.empty(2)
            thdd = np.empty(2)
            xi_des = desired_terminal_dcm(u_T, nominal.b_nom)
            N = horizon_length(T_step, ts, dt)
            sample_start = ts + dt * np.arange(N)
            in_ds = np.full(N, phase is Phase.DOUBLE) | (sample_start >= t_land - 0.5 * dt)
            statuses = []
            for a in range(2):
                ss = support_interval(Phase.SINGLE, u0, u_T, config, a)
                ds = support_interval(Phase.DOUBLE, u0, u_T, config, a)
                z_lo = np.where(in_ds, ds[0], ss[0])
                z_hi = np.where(in_ds, ds[1], ss[1])
                # the reference stays on the pivot stage 1 assumes for the whole step
                z_ref = np.full(N, 0.5 * (ss[0] + ss[1]))
                # after a stance switch the pivot restarts on the new foot
                pivot = cmp_prev[a] if k_step else z_ref[0] + j * thdd_prev[a] / (m * g)
                xhat = np.array([xi[a], w_d * (xi[a] - pivot), plant.theta[a], plant.theta_dot[a], thdd_model[a]])
                inputs = Stage2Inputs(xhat, float(xi_des[a]), z_ref, z_lo, z_hi)
                warm = None
                if warm2[a] is not None:
                    warm = shift_active_set(warm2[a], prev_N[a], N, shift=1 if k_step else 0)
                plan = regen.regenerate(inputs, warm_start=warm)
                statuses.append(plan.status)
                if plan.ok:
                    # the held trunk acceleration reproduces the planned trunk
                    # rate; the held CMP lands the DCM on the planned sample
                    thdd[a] = 0.5 * (thdd_model[a] + plan.theta_ddot_traj[0])
                    thdd_model[a] = plan.theta_ddot_traj[0]
                    c_a = (plan.xi_traj[0] - rho * xi[a]) / (1.0 - rho)
                    z[a] = min(max(c_a - j * thdd[a] / (m * g), z_lo[0]), z_hi[0])
                    warm2[a] = list(plan.active_set)
                else:
                    z[a] = min(max(cmp_prev[a], z_lo[0]), z_hi[0])
                    thdd[a] = thdd_model[a] = 0.0
                    warm2[a] = None
                prev_N[a] = N
            worst = [s for s in statuses if s is not QpStatus.OPTIMAL]
            qp2 = worst[0].value if worst else QpStatus.OPTIMAL.value

        cmp = cmp_location(z, j * thdd, m, g)

        if phase is Phase.SINGLE:
            swing_plan = plan_swing(swing_pos, swing_vel, swing_acc, u_T, ts, t_land, config.apex_height)
        log.append(
            t=t, com=plant.com.copy(), com_vel=plant.com_vel.copy(), dcm=xi, dcm_vel=w * (xi - cmp),
            zmp=z.copy(), cmp=cmp, theta=plant.theta.copy(), theta_dot=plant.theta_dot.copy(),
            theta_ddot=thdd.copy(), theta_ddot_cmd=thdd_model.copy(), swing=swing_pos.copy(), stance=stance.value, phase=phase.value,
            u0=u0.copy(), u_T=u_T.copy(), T_step=T_step, b=adaptation.b.copy(), t_step=ts,
            step_index=step_index, qp1_status=qp1, qp2_status=qp2,
            stage1_objective=adaptation.objective if qp1 != "frozen" else np.nan, touchdown=False,
        )

        plant = plant_step(plant, z, thdd, _push_accel(log.pushes, t, m), dt, omega0=w, m=m, g=g, j=j)
        cmp_prev = cmp
        thdd_prev = thdd
        k_step += 1
        ts_next = k_step * dt

        if phase is Phase.SINGLE:
            if ts_next >= t_land - 0.5 * dt:
                swing_pos = np.array([u_T[0], u_T[1], 0.0])
                swing_vel = np.zeros(3)
                swing_acc = np.zeros(3)
                phase = Phase.DOUBLE
                log.columns["touchdown"][-1] = True
            else:
                swing_pos = swing_plan.position(ts_next)
                swing_vel = swing_plan.velocity(ts_next)
                swing_acc = swing_plan.acceleration(ts_next)

        # phase boundaries snap to the nearest cycle; rounding up would add a
        # whole cycle to a step whenever T_step sits a hair above the grid
        if ts_next >= T_step - 0.5 * dt:
            xi_end = plant.dcm(w)
            log.steps.append(
                dict(
                    index=step_index, stance=stance.value, u0=u0.copy(), u_T=u_T.copy(),
                    T_step=T_step, t_end=t + dt, dcm_offset=xi_end - u_T, b_nom=nominal.b_nom.copy(),
                    theta=plant.theta.copy(), theta_dot=plant.theta_dot.copy(),
                )
            )
            if log.settled_time is None and step_settled(log.steps[-1]) and t + dt >= pushes_over:
                settled_run += 1
                if settled_run == stop_when_settled:
                    log.settled_time = t + dt
            else:
                settled_run = 0
            swing_pos = np.array([u0[0], u0[1], 0.0])
            u0 = u_T.copy()
            stance = stance.other
            nominal = compute_nominal_gait(v_des, config, stance)
            k_step = 0
            step_index += 1
            phase = Phase.SINGLE

        status = detect_failure(log, config)
        if not status.ok:
            log.status, log.failure_time = status, t
            if stop_on_failure:
                break
        if log.settled_time is not None:
            break

    return log.finalize()
