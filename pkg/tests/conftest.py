"""Shared pytest hooks: echo acceptance-criterion lines after the run.

Passing tests have their stdout captured, so the acceptance suite also
records its one-line verdicts in a module-level list that this hook prints
in the terminal summary, where output is never captured.
"""
import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = (sys.modules.get("test_acceptance")
           or sys.modules.get("tests.test_acceptance"))
    lines = getattr(mod, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
