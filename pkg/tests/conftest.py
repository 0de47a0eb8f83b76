"""Shared pytest hooks: per-criterion pass/fail summary for the acceptance suite."""

_CRITERIA: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance.py::test_criterion_" in report.nodeid:
        _CRITERIA[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid in sorted(_CRITERIA):
        name = nodeid.split("::")[-1]
        status = "PASS" if _CRITERIA[nodeid] == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}")
