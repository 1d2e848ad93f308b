import pytest

# (criterion number, passed, detail) appended by the acceptance tests
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(n: int, ok: bool, detail: str):
        ACCEPTANCE_LINES.append((n, ok, detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
