import numpy as np
import pytest

from tofec.analysis import ClassSpec
from tofec.delay_model import S3_LIKE, DelayParams

EXAMPLE_PARAMS = DelayParams(0.04, 0.02, 0.02, 0.01)


@pytest.fixture
def example_params():
    return EXAMPLE_PARAMS


@pytest.fixture
def read3mb():
    return ClassSpec("read", 3.0, 1.0, 6, 12, 2.0, S3_LIKE)


def random_params(rng: np.random.Generator, count: int) -> list[DelayParams]:
    """Strictly positive coefficient sets spanning two orders of magnitude."""
    out = []
    for _ in range(count):
        a = 10 ** rng.uniform(-3, -1, size=4)
        out.append(DelayParams(*a))
    return out


# (criterion, verdict line) pairs filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, str]] = []
ACCEPTANCE_INFO: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES and not ACCEPTANCE_INFO:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
    for line in ACCEPTANCE_INFO:
        terminalreporter.write_line(f"info: {line}")
