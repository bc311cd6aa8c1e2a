import json
import math

import numpy as np
import pytest

from wpg.harness import (
    TEXT_COLUMNS,
    TRACE_COLUMNS,
    TRACE_VERSION,
    Scenario,
    ScenarioError,
    bundled_scenarios,
    compare_modes,
    envelope_directions,
    load_scenario,
    parse_scenario,
    read_trace,
    round_sig,
    run_scenario,
    trace_columns,
    write_trace,
)
from wpg.simulator import Mode, PushEvent

GOOD = """\
[scenario]
name = "probe"
v_des = 0.3
mode = "stage1"
t_end = 2.0

[config]
foot_length = 0.22

[[push]]
t_start = 0.5
duration = 0.1
force = 50.0
psi = 1.0
"""


def test_parse_scenario():
    s = parse_scenario(GOOD)
    assert s.name == "probe" and s.v_des == 0.3 and s.mode is Mode.STAGE1_ONLY and s.t_end == 2.0
    assert s.config.foot_length == 0.22
    assert s.pushes == (PushEvent(0.5, 0.1, 50.0, 1.0),)


def test_defaults_fill_unspecified_fields():
    s = parse_scenario('[scenario]\nname = "bare"\n')
    assert s.v_des == 0.0 and s.mode is Mode.FULL and s.pushes == () and s.config.foot_width == 0.1


@pytest.mark.parametrize(
    "text,line,fragment",
    [
        (GOOD.replace("foot_length", "foot_lenght"), 8, "unknown key config.foot_lenght"),
        (GOOD.replace("t_end = 2.0", "t_end = 2.0\nspeed = 1"), 6, "unknown key scenario.speed"),
        (GOOD.replace("psi = 1.0", "psi = 1.0\nangle = 2"), 15, "unknown key push.angle"),
        (GOOD + "\n[extras]\nx = 1\n", 16, "unknown table"),
        (GOOD.replace('mode = "stage1"', 'mode = "both"'), 4, "mode must be"),
        (GOOD.replace("force = 50.0", 'force = "big"'), 13, "force must be a number"),
        (GOOD.replace("force = 50.0\n", ""), 10, "missing force"),
        (GOOD.replace("foot_length = 0.22", "foot_length = -0.2"), 8, "must be non-negative"),
    ],
)
def test_parse_errors_carry_line(text, line, fragment):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text, "probe.toml")
    assert f"probe.toml:{line}:" in str(err.value)
    assert fragment in str(err.value)


def test_toml_syntax_error():
    with pytest.raises(ScenarioError, match="line 2"):
        parse_scenario("[scenario]\nv_des = = 1\n", "bad.toml")


def test_bundled_scenarios():
    names = bundled_scenarios()
    assert {"nominal", "fig3_case_a", "fig3_case_b"} <= set(names)
    b = load_scenario("fig3_case_b")
    assert b.mode is Mode.FULL and b.pushes == (PushEvent(2.6, 0.1, 315.0, -math.pi / 2),)
    assert load_scenario("fig3_case_a").mode is Mode.STAGE1_ONLY
    with pytest.raises(ScenarioError):
        load_scenario("no_such_scenario")


def test_csv_round_trip(tmp_path, pushed_full):
    path = write_trace(pushed_full, tmp_path / "trace.csv")
    first = path.read_text().splitlines()[:2]
    assert first[0].startswith(f"# {TRACE_VERSION}")
    assert first[1].split(",") == list(TRACE_COLUMNS)
    back = read_trace(path)
    cols = trace_columns(pushed_full)
    assert list(back) == list(TRACE_COLUMNS)
    for name in TRACE_COLUMNS:
        if name in TEXT_COLUMNS:
            assert back[name] == list(cols[name])
        else:
            np.testing.assert_array_equal(back[name], round_sig(cols[name]), err_msg=name)
            np.testing.assert_allclose(back[name], cols[name], rtol=1e-11, atol=1e-300)


def test_run_scenario_nominal(tmp_path):
    log, summary = run_scenario("nominal", tmp_path)
    assert summary["ok"] and summary["status"] == "Ok"
    assert summary["mean_velocity_last6"] == pytest.approx(0.5, rel=0.05)
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["steps_completed"] == len(log.steps) == len(on_disk["steps"])
    assert (tmp_path / "trace.csv").is_file()


def test_case_a_summary_reports_failure(tmp_path):
    _, summary = run_scenario("fig3_case_a", tmp_path)
    assert summary["status"] == "Failed(DCM divergence)"
    assert not json.loads((tmp_path / "summary.json").read_text())["ok"]


def test_case_b_roll_peaks_then_settles(tmp_path):
    _, summary = run_scenario("fig3_case_b", tmp_path)
    roll = np.abs(read_trace(tmp_path / "trace.csv")["roll"])
    assert summary["ok"] and summary["steps_to_resume"] <= 4
    assert roll.max() > 0.1 and roll[-1] < 0.05


def test_compare_zero_push(tmp_path):
    result = compare_modes(Scenario("calm", v_des=0.5, t_end=4.0), tmp_path)
    assert result["stage1"]["ok"] and result["full"]["ok"]
    assert result["delta"]["max_foothold_difference"] <= 1e-6
    assert (tmp_path / "compare.csv").is_file() and (tmp_path / "compare.json").is_file()


def _nudge(force, psi):
    push = PushEvent(2.6, 0.1, force, psi)
    return compare_modes(Scenario("nudge", v_des=0.5, pushes=(push,), t_end=6.0))


@pytest.mark.xfail(
    strict=True,
    reason="stage 1 alone recovers only about 23 N rightward and 66 N leftward: with 5 cm of "
    "outward width room its timing cost keeps steps long while the lateral error grows",
)
def test_compare_100n_lateral_push_both_recover():
    result = _nudge(100.0, -math.pi / 2)
    assert result["stage1"]["ok"] and result["full"]["ok"]


@pytest.mark.parametrize("force,psi", [(20.0, -math.pi / 2), (60.0, math.pi / 2), (100.0, 0.0), (100.0, math.pi)])
def test_compare_push_inside_both_envelopes(force, psi):
    result = _nudge(force, psi)
    assert result["stage1"]["ok"] and result["full"]["ok"]


def test_compare_lateral_push_scenario():
    result = compare_modes(load_scenario("fig3_case_b"))
    assert not result["stage1"]["ok"] and result["full"]["ok"]


def test_envelope_directions():
    psi = envelope_directions(16)
    assert psi[0] == -math.pi and len(psi) == 16
    np.testing.assert_allclose(np.diff(psi), 2 * math.pi / 16)
    assert np.any(np.isclose(psi, -math.pi / 2)) and np.any(np.isclose(psi, math.pi / 2))
