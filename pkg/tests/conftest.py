"""Per-criterion summary for tests/test_acceptance.py.

Every acceptance test carries ``@pytest.mark.acceptance(index, title)``.  A
criterion passes only when all of its tests ran and passed; the summary prints one line each.
"""

from collections import defaultdict

import pytest

_outcomes: dict[int, list[tuple[str, str]]] = defaultdict(list)
_titles: dict[int, str] = {}
_collected: dict[int, int] = defaultdict(int)


def pytest_itemcollected(item):
    # Runs before -k / -m deselection, so a partially selected criterion is visible.
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        index, title = mark.args
        _titles[index] = title
        _collected[index] += 1


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[mark.args[0]].append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for index in sorted(_titles):
        results = _outcomes.get(index, [])
        if not results:
            status = "NOT RUN"
        elif any(o != "passed" for _, o in results):
            status = "FAIL"
        elif len(results) < _collected[index]:
            status = "PARTIAL"
        else:
            status = "PASS"
        failed = [name for name, o in results if o != "passed"]
        detail = f"  (failing: {', '.join(failed)})" if failed and status == "FAIL" else ""
        terminalreporter.write_line(f"criterion {index:2d} {status:7s} {_titles[index]}{detail}")
