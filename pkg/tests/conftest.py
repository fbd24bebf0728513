import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdict lines after the run; captured stdout
    would otherwise hide them for passing tests."""
    for name, mod in sys.modules.items():
        if name.rpartition(".")[2] == "test_acceptance":
            lines = getattr(mod, "_VERDICTS", [])
            if lines:
                terminalreporter.section("acceptance")
                for line in lines:
                    terminalreporter.write_line(line)
            return
