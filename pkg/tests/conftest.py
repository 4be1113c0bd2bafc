import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results = {}
_notes = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.failed or report.skipped:
        ok = report.passed if report.when == "call" else False
        _results[n] = _results.get(n, True) and ok
        for key, val in report.user_properties:
            _notes.setdefault(n, []).append(f"{key}={val}")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        line = f"criterion {n}: {'PASS' if _results[n] else 'FAIL'}"
        if n in _notes:
            line += "  (" + ", ".join(_notes[n]) + ")"
        terminalreporter.write_line(line)
