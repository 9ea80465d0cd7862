from pathlib import Path

import pytest
from hypothesis import settings

DATA_DIR = Path(__file__).resolve().parents[1] / "data"

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# Filled by tests/test_acceptance.py, printed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def record_acceptance():
    """Log one PASS/FAIL line for a criterion; returns ``passed`` for asserting."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
