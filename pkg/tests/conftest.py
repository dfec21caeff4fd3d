import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from primerace.zeros import compute_repository  # noqa: E402


@pytest.fixture(scope="session")
def repo163():
    return compute_repository(163, 1000.0)


@pytest.fixture(scope="session")
def repo101():
    return compute_repository(101, 1000.0)


@pytest.fixture(scope="session")
def repo24():
    return compute_repository(24, 1e4)


@pytest.fixture(scope="session")
def repo4():
    return compute_repository(4, 100.0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0][1:])):
            terminalreporter.write_line(line)
