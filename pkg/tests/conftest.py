import pytest

_CRITERIA: list[str] = []


@pytest.fixture
def report():
    """Record one result line per acceptance criterion; printed in the terminal summary."""

    def emit(number: int, ok: bool | None, detail: str) -> None:
        status = "REPORT" if ok is None else ("PASS" if ok else "FAIL")
        line = f"criterion {number:>2}: {status:<6} {detail}"
        _CRITERIA.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
