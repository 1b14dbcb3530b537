"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        _ACCEPTANCE[report.nodeid] = (report.outcome, props)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    rows = sorted(_ACCEPTANCE.values(), key=lambda r: int(r[1].get("criterion", 0)))
    for outcome, props in rows:
        status = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"{status}  criterion {props.get('criterion', '?'):>2}  "
                      f"{props.get('title', '')}  |  {props.get('measured', '')}")
    passed = sum(o == "passed" for o, _ in rows)
    tr.write_line(f"{passed}/{len(rows)} acceptance criteria met")
