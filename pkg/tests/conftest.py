import sys
from collections import defaultdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_OUTCOMES = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance clause id such as '4c'")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _OUTCOMES[props["criterion"]].append((report.outcome, props.get("measured", "")))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    grouped = defaultdict(list)
    for clause, results in _OUTCOMES.items():
        number = clause.rstrip("abcdefgh")
        grouped[int(number)].extend((clause, outcome, measured) for outcome, measured in results)
    terminalreporter.section("acceptance criteria")
    for number in sorted(grouped):
        clauses = sorted(grouped[number])
        ok = all(outcome == "passed" for _, outcome, _ in clauses)
        detail = "; ".join(f"{c} {'pass' if o == 'passed' else 'FAIL'}: {m}" for c, o, m in clauses)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  [{detail}]")
