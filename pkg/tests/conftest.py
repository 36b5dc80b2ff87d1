import re
import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = dict(getattr(module, "RESULTS", None) or {})
    # a criterion that raised before reporting still gets a FAIL line
    for report in terminalreporter.stats.get("failed", []) + terminalreporter.stats.get("error", []):
        match = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
        if match and int(match.group(1)) not in results:
            results[int(match.group(1))] = (f"criterion {int(match.group(1)):2d} FAIL  "
                                            f"{match.group(2).replace('_', ' ')}: raised an error")
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
