import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    """Remember one acceptance outcome and echo it immediately."""
    line = f"{criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[criterion] = line
    sys.__stdout__.write("\n" + line + "\n")
    sys.__stdout__.flush()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
