"""Collects one verdict line per acceptance criterion and prints them after the run."""

ACCEPTANCE_LINES: dict[int, list[str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.setdefault(number, []).append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        for line in ACCEPTANCE_LINES[number]:
            terminalreporter.write_line(line)
