"""Shared pytest plumbing.

The acceptance tests append one verdict line each; the summary hook prints
them after the run so the pass/fail ledger is visible even though pytest
captures stdout.
"""

VERDICTS = []


def record_verdict(line):
    VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in VERDICTS:
            terminalreporter.write_line(line)
