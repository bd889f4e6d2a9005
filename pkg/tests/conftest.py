import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def report_line():
    """Record a one-line acceptance verdict; all lines are repeated in the terminal summary."""

    def emit(line: str) -> None:
        print(line)
        _LINES.append(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
