import pytest

CRITERIA_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS, FAIL or SKIP line for an acceptance criterion and print it."""

    def record(number: int, name: str, ok: bool | None, detail: str) -> bool | None:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"criterion {number:>2} {status}  {name}: {detail}"
        CRITERIA_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
