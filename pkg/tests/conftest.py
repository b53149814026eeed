import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines are collected here and printed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    def record(criterion: str, passed, detail: str) -> None:
        # passed=None marks a criterion that could not run here
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"[{status}] {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
