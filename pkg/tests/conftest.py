import math
import time

import pytest

from wpg.config import GaitConfig
from wpg.simulator import Mode, PushEvent, run_closed_loop

# acceptance criteria report one line each at the end of the session
ACCEPTANCE_LINES: dict = {}

LATERAL_PUSH = PushEvent(t_start=2.6, duration=0.1, force=315.0, psi=-math.pi / 2)


def record(criterion: int, title: str, passed: bool, detail: str):
    line = f"criterion {criterion} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def config():
    return GaitConfig()


@pytest.fixture(scope="session")
def nominal_run(config):
    start = time.perf_counter()
    log = run_closed_loop(config, 0.5, (), Mode.FULL, 10.0)
    return log, time.perf_counter() - start


@pytest.fixture(scope="session")
def pushed_stage1(config):
    return run_closed_loop(config, 0.5, [LATERAL_PUSH], Mode.STAGE1_ONLY, 10.0)


@pytest.fixture(scope="session")
def pushed_full(config):
    return run_closed_loop(config, 0.5, [LATERAL_PUSH], Mode.FULL, 10.0)


@pytest.fixture(scope="session")
def envelope():
    from wpg.harness import run_envelope

    return run_envelope(psi_count=16)
