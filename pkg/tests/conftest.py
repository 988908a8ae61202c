"""Per-criterion pass/fail summary for the acceptance suite."""
from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, list[tuple[str, bool]]] = {}
_MARKS: dict[str, int] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _MARKS[item.nodeid] = int(m.args[0])


def pytest_runtest_logreport(report):
    n = _MARKS.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _RESULTS.setdefault(n, []).append((report.nodeid.split("::")[-1], report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        runs = _RESULTS[n]
        ok = all(p for _, p in runs)
        failed = [name for name, p in runs if not p]
        extra = f"  failing: {', '.join(failed)}" if failed else ""
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} ({len(runs)} checks){extra}")
