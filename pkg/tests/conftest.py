import re
from collections import defaultdict

_CRITERIA = defaultdict(list)
_NAMES = {
    1: "scenario delivery orders",
    2: "randomized property sweep",
    3: "mutated traces caught",
    4: "genuineness overhead",
    5: "latency step",
    6: "O1 p90 first destination",
    7: "workload mix and cascade",
    8: "scalability factor",
    9: "bounded history with flushes",
    10: "byte-identical outputs",
}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA[int(m.group(1))].append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_CRITERIA):
        verdict = "PASS" if all(_CRITERIA[c]) else "FAIL"
        terminalreporter.write_line(f"criterion {c:2d} {verdict}  {_NAMES.get(c, '')}")
