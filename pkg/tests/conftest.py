import re

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per numbered acceptance test."""
    status = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            m = _CRITERION.search(nodeid)
            if m is None:
                continue
            n = int(m.group(1))
            ok = outcome == "passed"
            status[n] = status.get(n, True) and ok
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(status):
        terminalreporter.write_line(
            f"criterion {n}: {'PASS' if status[n] else 'FAIL'}")
