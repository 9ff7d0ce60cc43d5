import sys


def pytest_terminal_summary(terminalreporter):
    # acceptance lines are recorded by test_acceptance.py
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
