import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """``criterion(number, passed, detail)`` records one acceptance line."""

    def record(number, passed, detail):
        _LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_LINES):
            terminalreporter.write_line(_LINES[number])
