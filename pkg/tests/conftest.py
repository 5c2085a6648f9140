import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    def emit(criterion: str, ok: bool, value: str, tolerance: str, seconds: float | None = None):
        tail = f" ({seconds:.1f}s)" if seconds is not None else ""
        line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {value}  [tolerance: {tolerance}]{tail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
