import pytest

from carbonclear.model import builtin_three_bus
from carbonclear.scenario import load_rts_gmlc

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def three_bus():
    return builtin_three_bus()


@pytest.fixture(scope="session")
def rts():
    return load_rts_gmlc()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
