import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance scoreboard after the test summary, when it ran."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SCOREBOARD", None)
    if not lines:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
