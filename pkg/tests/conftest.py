import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    def check(name: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
        _VERDICTS.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
