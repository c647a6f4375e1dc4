import pytest

ACCEPTANCE = []


@pytest.fixture
def record():
    """Log one acceptance line: ``record(number, passed, detail)``."""

    def _record(number, passed, detail=""):
        ACCEPTANCE.append((number, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
