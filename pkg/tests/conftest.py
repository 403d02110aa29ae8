import pytest

RESULTS: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line; printed again in the terminal summary."""
    def _report(name: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
        RESULTS.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
