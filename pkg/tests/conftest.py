from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIOS


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
