import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
