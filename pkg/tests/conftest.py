from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# criterion number -> "PASS ..." / "FAIL ..." line, filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
