import pytest

# criterion number -> (passed, detail), filled by the acceptance suite
CRITERIA: dict = {}


@pytest.fixture
def report():
    def record(n: int, passed: bool, detail: str = "") -> bool:
        CRITERIA[n] = (bool(passed), detail)
        print(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
