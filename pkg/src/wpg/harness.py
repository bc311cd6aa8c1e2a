"""Scenario files, trace export, push envelopes and mode comparisons."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, GaitConfig
from .simulator import Mode, PushEvent, SimLog, run_closed_loop

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TRACE_VERSION = "wpg-trace/1"
TRACE_COLUMNS = (
    "t", "com_x", "com_y", "dcm_x", "dcm_y", "zmp_x", "zmp_y", "cmp_x", "cmp_y",
    "pitch", "roll", "pitch_rate", "roll_rate", "swing_x", "swing_y", "swing_z",
    "stance", "phase", "uT_x", "uT_y", "T_step", "b_x", "b_y", "qp1_status", "qp2_status",
)
TEXT_COLUMNS = ("stance", "phase", "qp1_status", "qp2_status")
DIGITS = 12

# recovery: once walking has resumed, every step ends with the DCM offset
# within this multiple of the nominal one, the trunk within UPRIGHT of
# vertical, and a duration strictly inside the timing bounds
RESUME_OFFSET_FACTOR = 2.0
UPRIGHT = 0.05
# stricter: landing on the nominal foothold with the nominal duration
NOMINAL_FOOTHOLD = 0.02
NOMINAL_DURATION = 0.02

# envelope runs end once two steps have settled; a run still unsettled
# this long after the push counts as a failure
ENVELOPE_SETTLE_STEPS = 2
ENVELOPE_HORIZON = 8.0
F_HI_INIT = 600.0
BRACKET = 1.0


class ScenarioError(ValueError):
    """Malformed scenario file; the message carries the file and line."""


@dataclass(frozen=True)
class Scenario:
    name: str
    config: GaitConfig = field(default_factory=GaitConfig)
    v_des: float = 0.0
    pushes: tuple = ()
    mode: Mode = Mode.FULL
    t_end: float = 10.0
    seed: int = 0

    def with_mode(self, mode) -> "Scenario":
        return Scenario(self.name, self.config, self.v_des, self.pushes, Mode(mode), self.t_end, self.seed)

    def simulate(self, **kwargs) -> SimLog:
        return run_closed_loop(self.config, self.v_des, self.pushes, self.mode, self.t_end, **kwargs)


_SCENARIO_KEYS = {"name": str, "v_des": float, "mode": str, "t_end": float, "seed": int}
_PUSH_KEYS = {"t_start": float, "duration": float, "force": float, "psi": float}


def _key_line(text: str, key: str, after: int = 0) -> Optional[int]:
    pattern = re.compile(rf"^\s*[\"']?{re.escape(key)}[\"']?\s*=")
    for number, line in enumerate(text.splitlines()[after:], start=after + 1):
        if pattern.match(line):
            return number
    return None


def _section_line(text: str, header: str) -> int:
    pattern = re.compile(rf"^\s*\[\[?\s*{re.escape(header)}\s*\]\]?")
    for number, line in enumerate(text.splitlines(), start=1):
        if pattern.match(line):
            return number
    return 0


def _fail(source: str, line: Optional[int], message: str):
    where = f"{source}:{line}" if line else source
    raise ScenarioError(f"{where}: {message}")


def _typed(source, text, section_line, key, value, kind):
    line = _key_line(text, key, section_line)
    if kind is str:
        if not isinstance(value, str):
            _fail(source, line, f"{key} must be a string")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(source, line, f"{key} must be a number")
    if kind is int:
        if not float(value).is_integer():
            _fail(source, line, f"{key} must be an integer")
        return int(value)
    return float(value)


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Build a scenario from TOML text.

    Layout::

        [scenario]           # name, v_des, mode ("stage1" | "full"), t_end, seed
        [config]             # any GaitConfig field
        [[push]]             # t_start, duration, force [N], psi [rad]

    Every table and key is checked; unknown ones are rejected with the line
    they appear on.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: {exc}") from None

    for table in data:
        if table not in ("scenario", "config", "push"):
            _fail(source, _section_line(text, table) or _key_line(text, table), f"unknown table [{table}]")

    head = data.get("scenario", {})
    head_line = _section_line(text, "scenario")
    if not isinstance(head, dict):
        _fail(source, _key_line(text, "scenario"), "scenario must be a table")
    values = {}
    for key, value in head.items():
        if key not in _SCENARIO_KEYS:
            _fail(source, _key_line(text, key, head_line), f"unknown key scenario.{key}")
        values[key] = _typed(source, text, head_line, key, value, _SCENARIO_KEYS[key])
    if "mode" in values:
        try:
            values["mode"] = Mode(values["mode"])
        except ValueError:
            _fail(source, _key_line(text, "mode", head_line), f"mode must be 'stage1' or 'full', got {values['mode']!r}")

    overrides = data.get("config", {})
    config_line = _section_line(text, "config")
    if not isinstance(overrides, dict):
        _fail(source, _key_line(text, "config"), "config must be a table")
    known = GaitConfig.__dataclass_fields__
    for key in overrides:
        if key not in known:
            _fail(source, _key_line(text, key, config_line), f"unknown key config.{key}")
    try:
        config = GaitConfig.from_mapping(overrides)
    except ConfigError as exc:
        key = next((k for k in overrides if k in str(exc)), None)
        _fail(source, _key_line(text, key, config_line) if key else config_line, str(exc))

    pushes = []
    raw_pushes = data.get("push", [])
    if not isinstance(raw_pushes, list):
        _fail(source, _key_line(text, "push"), "push entries must be written as [[push]] tables")
    push_lines = [n for n, line in enumerate(text.splitlines(), 1) if re.match(r"^\s*\[\[\s*push\s*\]\]", line)]
    for i, entry in enumerate(raw_pushes):
        start = push_lines[i] if i < len(push_lines) else 0
        for key in entry:
            if key not in _PUSH_KEYS:
                _fail(source, _key_line(text, key, start), f"unknown key push.{key}")
        missing = [k for k in _PUSH_KEYS if k not in entry]
        if missing:
            _fail(source, start, f"push is missing {', '.join(missing)}")
        args = {k: _typed(source, text, start, k, entry[k], float) for k in _PUSH_KEYS}
        try:
            pushes.append(PushEvent(**args))
        except ValueError as exc:
            _fail(source, start, str(exc))

    name = values.pop("name", Path(source).stem)
    scenario = Scenario(name=name, config=config, pushes=tuple(pushes), **values)
    if not scenario.t_end > 0:
        _fail(source, _key_line(text, "t_end", head_line), "t_end must be positive")
    return scenario


def bundled_scenarios() -> list[str]:
    folder = resources.files("wpg") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def load_scenario(path_or_name) -> Scenario:
    """Read a scenario file, or a bundled scenario by name."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_scenario(path.read_text(), str(path))
    bundled = resources.files("wpg") / "scenarios" / f"{path_or_name}.toml"
    if bundled.is_file():
        return parse_scenario(bundled.read_text(), f"{path_or_name}.toml")
    raise ScenarioError(f"{path_or_name}: no such scenario file or bundled scenario")


# ---- trace files


def trace_columns(log: SimLog) -> dict:
    """Trace columns in export order; numeric ones as arrays."""
    xy = lambda name, a: np.asarray(log.columns[name], float)[:, a]  # noqa: E731
    return {
        "t": np.asarray(log.t, float),
        "com_x": xy("com", 0), "com_y": xy("com", 1),
        "dcm_x": xy("dcm", 0), "dcm_y": xy("dcm", 1),
        "zmp_x": xy("zmp", 0), "zmp_y": xy("zmp", 1),
        "cmp_x": xy("cmp", 0), "cmp_y": xy("cmp", 1),
        # trunk rotation that moves the CMP along x is pitch, along y roll
        "pitch": xy("theta", 0), "roll": xy("theta", 1),
        "pitch_rate": xy("theta_dot", 0), "roll_rate": xy("theta_dot", 1),
        "swing_x": xy("swing", 0), "swing_y": xy("swing", 1), "swing_z": xy("swing", 2),
        "stance": list(log.columns["stance"]), "phase": list(log.columns["phase"]),
        "uT_x": xy("u_T", 0), "uT_y": xy("u_T", 1),
        "T_step": np.asarray(log.T_step, float),
        "b_x": xy("b", 0), "b_y": xy("b", 1),
        "qp1_status": list(log.columns["qp1_status"]), "qp2_status": list(log.columns["qp2_status"]),
    }


def _fmt(value) -> str:
    return value if isinstance(value, str) else f"{value:.{DIGITS}g}"


def write_trace(log: SimLog, path) -> Path:
    path = Path(path)
    cols = trace_columns(log)
    with path.open("w", newline="") as fh:
        fh.write(f"# {TRACE_VERSION} columns={len(TRACE_COLUMNS)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for i in range(len(cols["t"])):
            writer.writerow([_fmt(cols[name][i]) for name in TRACE_COLUMNS])
    return path


def read_trace(path) -> dict:
    """Columns of a trace file; numeric columns come back as float arrays."""
    with Path(path).open(newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith(f"# {TRACE_VERSION}"):
            raise ValueError(f"{path}: not a {TRACE_VERSION} file")
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out = {}
    for k, name in enumerate(header):
        values = [row[k] for row in rows]
        out[name] = values if name in TEXT_COLUMNS else np.array([float(v) for v in values])
    return out


def round_sig(values, digits: int = DIGITS) -> np.ndarray:
    """``values`` as they read back from the trace text."""
    return np.array([float(f"{v:.{digits}g}") for v in np.ravel(values)]).reshape(np.shape(values))


# ---- metrics


def mean_velocity(log: SimLog, steps: int = 6) -> float:
    """Forward CoM velocity averaged over the last ``steps`` completed steps."""
    if len(log.steps) <= steps:
        raise ValueError(f"need more than {steps} completed steps, got {len(log.steps)}")
    t = np.asarray(log.t)
    dt = log.config.dt_s
    t0, t1 = log.steps[-steps - 1]["t_end"], log.steps[-1]["t_end"]
    i0, i1 = np.searchsorted(t, t0 - 0.5 * dt), np.searchsorted(t, t1 - 0.5 * dt)
    if i1 >= len(t):
        com_end = log.columns["com"][-1][0] + log.columns["com_vel"][-1][0] * dt
    else:
        com_end = log.columns["com"][i1][0]
    return float((com_end - log.columns["com"][i0][0]) / (t1 - t0))


def push_step_index(log: SimLog, t_push: float) -> int:
    """Index of the step during which a push starting at ``t_push`` begins."""
    step = np.asarray(log.step_index)[np.asarray(log.t) >= t_push - 1e-9]
    return int(step[0]) if step.size else len(log.steps)


def _steps_after_push(log: SimLog, t_push: float, on_gait) -> Optional[int]:
    """Steps after the pushed one until ``on_gait`` holds for every later step."""
    if not log.status.ok:
        return None
    first = push_step_index(log, t_push)
    resumed = None
    for k in range(len(log.steps) - 1, first - 1, -1):
        if not on_gait(log.steps[k]):
            break
        resumed = k
    return None if resumed is None else resumed - first


def steps_to_resume(log: SimLog, t_push: float) -> Optional[int]:
    """Steps after the pushed one until walking has resumed for good.

    From then on every step ends with its DCM offset within twice the nominal
    offset of the nominal one and the trunk upright, and no step is squeezed
    against the timing bounds. ``None`` if the run fails or never resumes.
    """
    from .stage1 import Stance, compute_nominal_gait

    config = log.config

    def on_gait(s):
        nominal = compute_nominal_gait(log.v_des, config, Stance(s["stance"]))
        offset = np.max(np.abs(s["dcm_offset"] - nominal.b_nom))
        return (
            offset <= RESUME_OFFSET_FACTOR * np.max(np.abs(nominal.b_nom))
            and np.max(np.abs(s["theta"])) <= UPRIGHT
            and config.T_min + 1e-9 < s["T_step"] < config.T_max - 1e-9
        )

    return _steps_after_push(log, t_push, on_gait)


def steps_to_nominal_footholds(log: SimLog, t_push: float) -> Optional[int]:
    """Steps after the pushed one until every step lands on the nominal foothold and timing."""
    from .stage1 import Stance, compute_nominal_gait

    def on_gait(s):
        nominal = compute_nominal_gait(log.v_des, log.config, Stance(s["stance"]))
        return (
            np.max(np.abs(s["u_T"] - s["u0"] - nominal.step)) <= NOMINAL_FOOTHOLD
            and abs(s["T_step"] - nominal.T_nom) <= NOMINAL_DURATION
        )

    return _steps_after_push(log, t_push, on_gait)


def summarize(log: SimLog, scenario: Optional[Scenario] = None, runtime: Optional[float] = None) -> dict:
    t_push = min((p.t_start for p in log.pushes), default=None)
    theta = np.asarray(log.theta)
    zmp_excursion = np.abs(np.asarray(log.zmp) - np.asarray(log.u0))
    summary = {
        "scenario": scenario.name if scenario else None,
        "mode": log.mode.value,
        "v_des": log.v_des,
        "status": str(log.status),
        "ok": log.status.ok,
        "failure_reason": log.status.reason,
        "failure_time": log.failure_time,
        "duration": float(log.t[-1] + log.config.dt_s) if len(log) else 0.0,
        "steps_completed": len(log.steps),
        "peak_pitch": float(np.max(np.abs(theta[:, 0]))) if len(log) else 0.0,
        "peak_roll": float(np.max(np.abs(theta[:, 1]))) if len(log) else 0.0,
        "final_roll": float(abs(theta[-1, 1])) if len(log) else 0.0,
        "peak_zmp_excursion": float(np.max(zmp_excursion)) if len(log) else 0.0,
        "mean_velocity_last6": mean_velocity(log) if len(log.steps) > 6 else None,
        "steps_to_resume": steps_to_resume(log, t_push) if t_push is not None else None,
        "steps_to_nominal_footholds": steps_to_nominal_footholds(log, t_push) if t_push is not None else None,
        "runtime_s": runtime,
        "pushes": [vars(p) for p in log.pushes],
        "steps": [
            {
                "index": s["index"],
                "stance": s["stance"],
                "u0": s["u0"].tolist(),
                "u_T": s["u_T"].tolist(),
                "T_step": s["T_step"],
                "t_end": s["t_end"],
                "dcm_offset": s["dcm_offset"].tolist(),
            }
            for s in log.steps
        ],
    }
    return summary


def run_scenario(scenario, out_dir=None) -> tuple[SimLog, dict]:
    """Simulate ``scenario`` (object, file path or bundled name) and write its files.

    With ``out_dir`` set, writes ``trace.csv`` and ``summary.json`` there.
    """
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    start = time.perf_counter()
    log = scenario.simulate()
    summary = summarize(log, scenario, time.perf_counter() - start)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(log, out / "trace.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return log, summary


# ---- push envelope


@dataclass
class EnvelopeRow:
    psi: float
    f_max_stage1: Optional[float] = None
    f_max_full: Optional[float] = None
    # why the smallest failing push failed; None when F_hi_init was recovered
    reason_stage1: Optional[str] = None
    reason_full: Optional[str] = None

    def f_max(self, mode) -> Optional[float]:
        return getattr(self, f"f_max_{Mode(mode).value}")


@dataclass
class EnvelopeResult:
    rows: list
    # (psi, mode) -> [(force, recovered), ...] in evaluation order
    traces: dict
    f_hi_init: float
    runtime_s: float = 0.0

    def monotonicity_violations(self) -> list:
        """``(psi, mode, recovered_force, failed_force)`` with a failure below a recovery."""
        out = []
        for (psi, mode), trace in sorted(self.traces.items()):
            for f_ok, ok in trace:
                if not ok:
                    continue
                for f_bad, ok2 in trace:
                    if not ok2 and f_bad < f_ok:
                        out.append((psi, mode, f_ok, f_bad))
        return out

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["psi", "f_max_stage1", "f_max_full"])
            for row in self.rows:
                writer.writerow(
                    [_fmt(row.psi)]
                    + ["" if row.f_max(m) is None else _fmt(row.f_max(m)) for m in ("stage1", "full")]
                )
        return path


def envelope_directions(count: int) -> np.ndarray:
    """``count`` push directions evenly spaced from -pi."""
    return -math.pi + 2.0 * math.pi * np.arange(count) / count


def recovers(config: GaitConfig, mode, force: float, psi: float, dt_push: float = 0.1) -> tuple[bool, str]:
    """Push at the start of a left-stance step while stepping in place.

    Recovered means no failure and two settled steps within
    ``ENVELOPE_HORIZON`` seconds.
    """
    pushes = [PushEvent(0.0, dt_push, force, psi)] if force > 0 else []
    log = run_closed_loop(
        config, 0.0, pushes, mode, ENVELOPE_HORIZON + dt_push, stop_when_settled=ENVELOPE_SETTLE_STEPS
    )
    if not log.status.ok:
        return False, log.status.reason
    if log.settled_time is None:
        return False, "not settled"
    return True, ""


def _bisect(args):
    config, mode, psi, f_hi_init, dt_push = args
    trace = []

    def probe(force):
        ok, why = recovers(config, mode, force, psi, dt_push)
        trace.append((float(force), ok))
        return ok, why

    ok, reason = probe(f_hi_init)
    if ok:
        return f_hi_init, None, trace
    ok, why = probe(0.0)
    if not ok:
        return 0.0, why, trace
    lo, hi = 0.0, f_hi_init
    while hi - lo > BRACKET:
        mid = 0.5 * (lo + hi)
        ok, why = probe(mid)
        if ok:
            lo = mid
        else:
            hi, reason = mid, why
    return lo, reason, trace


def run_envelope(
    config: Optional[GaitConfig] = None,
    psi_count: int = 16,
    F_hi_init: float = F_HI_INIT,
    dt_push: float = 0.1,
    modes: Sequence = (Mode.STAGE1_ONLY, Mode.FULL),
    workers: Optional[int] = None,
) -> EnvelopeResult:
    """Largest recovered push per direction and mode, bracketed to ``BRACKET`` newtons.

    ``F_max`` is the largest force seen recovering; a direction that recovers
    even at ``F_hi_init`` reports ``F_hi_init``. The (direction, mode)
    searches are independent and run across ``workers`` processes
    (default: one per CPU).
    """
    if psi_count < 4:
        raise ValueError("psi_count must be at least 4")
    if not dt_push > 0:
        raise ValueError("dt_push must be positive")
    config = config or GaitConfig()
    modes = [Mode(m) for m in modes]
    psis = envelope_directions(psi_count)
    jobs = [(config, mode, float(psi), F_hi_init, dt_push) for psi in psis for mode in modes]
    workers = workers or os.cpu_count() or 1
    start = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_bisect, jobs))
    else:
        results = [_bisect(job) for job in jobs]
    rows = {float(psi): EnvelopeRow(psi=float(psi)) for psi in psis}
    traces = {}
    for (_, mode, psi, _, _), (f_max, reason, trace) in zip(jobs, results):
        setattr(rows[psi], f"f_max_{mode.value}", f_max)
        setattr(rows[psi], f"reason_{mode.value}", reason)
        traces[(psi, mode.value)] = trace
    return EnvelopeResult(
        rows=[rows[float(p)] for p in psis],
        traces=traces,
        f_hi_init=F_hi_init,
        runtime_s=time.perf_counter() - start,
    )


# ---- mode comparison


def compare_modes(scenario, out_dir=None) -> dict:
    """Run ``scenario`` in both modes; returns per-mode summaries and their deltas.

    With ``out_dir`` set, writes ``compare.csv`` (trace columns prefixed by
    mode, padded where one run stopped early) and ``compare.json``.
    """
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    logs, summaries = {}, {}
    for mode in (Mode.STAGE1_ONLY, Mode.FULL):
        logs[mode.value], summaries[mode.value] = run_scenario(scenario.with_mode(mode))
    a, b = summaries["stage1"], summaries["full"]
    n = min(len(a["steps"]), len(b["steps"]))
    foothold_diff = max(
        (float(np.max(np.abs(np.subtract(a["steps"][i]["u_T"], b["steps"][i]["u_T"])))) for i in range(n)),
        default=0.0,
    )
    result = {
        "scenario": scenario.name,
        "stage1": _brief(a),
        "full": _brief(b),
        "delta": {
            "peak_roll": b["peak_roll"] - a["peak_roll"],
            "peak_pitch": b["peak_pitch"] - a["peak_pitch"],
            "peak_zmp_excursion": b["peak_zmp_excursion"] - a["peak_zmp_excursion"],
            "max_foothold_difference": foothold_diff,
        },
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_joined(logs, out / "compare.csv")
        (out / "compare.json").write_text(json.dumps(result, indent=2) + "\n")
    return result


def _brief(summary: dict) -> dict:
    keys = ("status", "ok", "failure_time", "steps_to_resume", "peak_roll", "peak_pitch", "peak_zmp_excursion")
    return {k: summary[k] for k in keys}


def _write_joined(logs: dict, path: Path):
    cols = {mode: trace_columns(log) for mode, log in logs.items()}
    longest = max(cols.values(), key=lambda c: len(c["t"]))
    names = [f"{mode}_{name}" for mode in cols for name in TRACE_COLUMNS[1:]]
    with path.open("w", newline="") as fh:
        fh.write(f"# {TRACE_VERSION} joined\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", *names])
        for i in range(len(longest["t"])):
            row = [_fmt(longest["t"][i])]
            for c in cols.values():
                present = i < len(c["t"])
                row += [_fmt(c[name][i]) if present else "" for name in TRACE_COLUMNS[1:]]
            writer.writerow(row)
