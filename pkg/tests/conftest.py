import sys

N_CRITERIA = 10


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.STARTED:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        line = module.RESULTS.get(n)
        if line is None:
            line = f"criterion {n:2d} {'FAIL' if n in module.STARTED else 'SKIP'}: did not report"
        terminalreporter.write_line(line)
