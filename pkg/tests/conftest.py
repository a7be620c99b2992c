import pytest

VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line, then assert on it."""

    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}"
        VERDICTS.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(VERDICTS):
        terminalreporter.write_line(line)
