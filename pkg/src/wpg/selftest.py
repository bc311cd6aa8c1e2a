"""Property checks that run against the independent oracles.

``wpg selftest`` runs each check at a reduced size and prints one line per
check; the test suite runs the same properties at full size.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracles
from .config import GaitConfig
from .model import discretize
from .qp import QpProblem, QpStatus, kkt_residual, solve
from .simulator import Mode, run_closed_loop
from .stage1 import Stage1Inputs, Stance, adapt_step, compute_nominal_gait
from .stage2 import Regenerator, Stage2Inputs


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def qp_oracle(count: int = 1000, seed: int = 0) -> CheckResult:
    """Solver optimum vs. exhaustive active-set enumeration, plus KKT residuals."""
    rng = np.random.default_rng(seed)
    worst_x = worst_kkt = 0.0
    mismatched = 0
    for _ in range(count):
        n = int(rng.integers(1, 9))
        p = int(rng.integers(0, min(2, n - 1) + 1)) if n > 1 else 0
        q = int(rng.integers(0, 9))
        H, f, A_eq, b_eq, A_in, b_in = oracles.random_qp(rng, n, p, q)
        problem = QpProblem(H, f, A_eq, b_eq, A_in, b_in)
        sol = solve(problem)
        ref = oracles.enumerate_qp(H, f, A_eq, b_eq, A_in, b_in)
        if sol.status is not QpStatus.OPTIMAL or ref is None:
            mismatched += 1
            continue
        worst_x = max(worst_x, float(np.max(np.abs(sol.x_star - ref[0]))))
        worst_kkt = max(worst_kkt, kkt_residual(problem, sol.x_star, sol.multipliers))
    passed = mismatched == 0 and worst_x <= 1e-7 and worst_kkt <= 1e-8
    return CheckResult(
        "qp-oracle", passed, f"{count} problems, max |dx| {worst_x:.1e}, max KKT {worst_kkt:.1e}, mismatched {mismatched}"
    )


def discretization(count: int = 100, seed: int = 1, config: GaitConfig = None) -> CheckResult:
    """A/B propagation vs. closed-form integration of the two chains."""
    config = config or GaitConfig()
    model = discretize(config.omega0, config.dt_s)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        x = rng.uniform(-1.0, 1.0, 5)
        u = rng.uniform(-20.0, 20.0, 2)
        exact = oracles.integrate_chains(x, u, config.dt_s)
        worst = max(worst, float(np.max(np.abs(model.A @ x + model.B @ u - exact))))
    return CheckResult("discretization", worst <= 1e-12, f"{count} cases, max error {worst:.1e}")


def terminal_dcm(count: int = 100, seed: int = 2, config: GaitConfig = None) -> CheckResult:
    """Stage-2 plans reach the desired end-of-step DCM when no bound is active.

    Support and trunk limits are widened so that none binds; the weights stay
    at their defaults. Horizons start at three samples: over one or two,
    a centimetre of terminal miss is cheaper than the acceleration needed.
    """
    config = (config or GaitConfig()).replace(tau_max=1e6, theta_min=-1e3, theta_max=1e3)
    regen = Regenerator(config)
    rng = np.random.default_rng(seed)
    worst = 0.0
    bound_hits = 0
    for _ in range(count):
        N = int(rng.integers(3, round(config.T_nom / config.dt_s) + 1))
        xhat = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0.0, 0.0, 0.0])
        xi_des = float(rng.uniform(-0.3, 0.3))
        wide = np.full(N, 1e3)
        plan = regen.regenerate(Stage2Inputs(xhat, xi_des, np.zeros(N), -wide, wide))
        if not plan.ok or plan.active_set:
            bound_hits += 1
            continue
        worst = max(worst, abs(float(plan.xi_traj[-1]) - xi_des))
    passed = bound_hits == 0 and worst <= 1e-3
    return CheckResult("terminal-dcm", passed, f"{count} states, max miss {worst:.1e} m, bound-active {bound_hits}")


def periodicity(steps: int = 20, v_des: float = 0.5, config: GaitConfig = None) -> CheckResult:
    """Step-end DCM offsets stay on ``b_nom`` through an undisturbed run.

    The closed loop is checked over ``steps`` steps. Independently, a point-foot
    walker started one step before each stance's orbit point must land on the
    next offset; the open-loop walker amplifies round-off by ``exp(omega0 T)``
    per step, so it only checks the one-step map.
    """
    config = config or GaitConfig()
    log = run_closed_loop(config, v_des, (), Mode.STAGE1_ONLY, (steps + 0.5) * config.T_nom)
    worst = 0.0
    for s in log.steps[:steps]:
        b_nom = compute_nominal_gait(v_des, config, Stance(s["stance"])).b_nom
        worst = max(worst, float(np.max(np.abs(s["dcm_offset"] - b_nom))))
    worst_oracle = 0.0
    for stance in Stance:
        nominal = compute_nominal_gait(v_des, config, stance)
        xi0 = (nominal.step + nominal.b_nom) / nominal.tau_nom
        offsets = oracles.point_foot_step_offsets(config.omega0, xi0, nominal.L_nom, nominal.W_nom, nominal.T_nom, 1)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(offsets[0] - nominal.b_nom))))
    passed = len(log.steps) >= steps and max(worst, worst_oracle) <= 1e-6
    return CheckResult(
        "periodicity", passed, f"{min(steps, len(log.steps))} steps, closed loop {worst:.1e}, point-foot walker {worst_oracle:.1e}"
    )


def point_contact(v_des: float = 0.5, t_end: float = 4.0, config: GaitConfig = None) -> CheckResult:
    """Zero-size feet and stage 1 alone: ZMP on the stance point, step outputs replayable bit for bit."""
    config = (config or GaitConfig()).replace(foot_length=0.0, foot_width=0.0)
    log = run_closed_loop(config, v_des, (), Mode.STAGE1_ONLY, t_end)
    zmp_dev = float(np.max(np.abs(np.asarray(log.zmp) - np.asarray(log.u0))))
    replay_mismatch = 0
    rows = [i for i, s in enumerate(log.qp1_status) if s != "frozen"]
    for i in rows:
        stance = Stance(log.stance[i])
        inputs = Stage1Inputs(log.dcm[i].copy(), log.u0[i].copy(), float(log.t_step[i]), stance)
        out = adapt_step(inputs, compute_nominal_gait(v_des, config, stance), config)
        if not (np.array_equal(out.u_T, log.u_T[i]) and out.T_step == log.T_step[i] and np.array_equal(out.b, log.b[i])):
            replay_mismatch += 1
    passed = zmp_dev == 0.0 and replay_mismatch == 0 and log.status.ok
    return CheckResult(
        "point-contact", passed, f"{len(rows)} stage-1 solves replayed, mismatches {replay_mismatch}, max |z - u0| {zmp_dev:.1e}"
    )


def csv_round_trip(t_end: float = 2.0) -> CheckResult:
    """An emitted trace reads back to the logged values at 12 significant digits."""
    from .harness import TEXT_COLUMNS, read_trace, round_sig, trace_columns, write_trace

    log = run_closed_loop(GaitConfig(), 0.5, (), Mode.FULL, t_end)
    with tempfile.TemporaryDirectory() as tmp:
        back = read_trace(write_trace(log, Path(tmp) / "trace.csv"))
    cols = trace_columns(log)
    bad = [
        name
        for name, values in cols.items()
        if (list(values) != back[name] if name in TEXT_COLUMNS else not np.array_equal(round_sig(values), back[name]))
    ]
    return CheckResult("csv-round-trip", not bad, f"{len(cols['t'])} rows" + (f", differing: {bad}" if bad else ""))


def run_all(quick: bool = True) -> list[CheckResult]:
    scale = 0.2 if quick else 1.0
    return [
        qp_oracle(count=max(1, math.ceil(1000 * scale))),
        discretization(),
        terminal_dcm(count=max(1, math.ceil(100 * scale))),
        periodicity(),
        point_contact(),
        csv_round_trip(),
    ]
