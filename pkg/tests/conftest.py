import time

import numpy as np
import pytest
from hypothesis import settings

from bastion import load_preset, run_scenario

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def case1():
    """Full obstacle-avoidance run with the barrier state (10 s at dt = 1e-3)."""
    t0 = time.perf_counter()
    result = run_scenario(load_preset("case7_bas.json"))
    result.wall_time = time.perf_counter() - t0
    return result


@pytest.fixture(scope="session")
def case3():
    """Same plant and learner without the barrier state."""
    return run_scenario(load_preset("case7_nosafety.json"))


@pytest.fixture(scope="session")
def lqr_record():
    from bastion import run_lqr_oracle
    return run_lqr_oracle(load_preset("lqr_oracle.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one acceptance line, print it, and return the verdict."""
    lines = request.config.acceptance_lines

    def _report(number, title, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
        lines.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
