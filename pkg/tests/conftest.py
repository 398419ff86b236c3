import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (passed, detail), filled by test_acceptance.py
CRITERIA: dict = {}
N_CRITERIA = 10


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in CRITERIA:
            ok, detail = CRITERIA[n]
            terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:>2}: NOT RUN")
