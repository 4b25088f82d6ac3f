import json
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

# (criterion, passed, detail) lines appended by test_acceptance
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def golden():
    with open(DATA / "golden.json") as fh:
        return json.load(fh)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {crit}: {detail}")
