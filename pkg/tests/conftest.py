"""Shared pytest wiring: the acceptance tests register one verdict line each,
echoed as a terminal summary block so the criterion results are visible in a
plain `pytest -v` run.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.line(line)
