import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line; all lines are echoed in the terminal summary."""

    def add(label, ok, detail):
        line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
