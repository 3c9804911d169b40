import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# acceptance verdicts, one line each, repeated in the terminal summary
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
