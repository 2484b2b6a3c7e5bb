from __future__ import annotations

import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
WORLD = FIXTURES / "world"
EXTRACT = FIXTURES / "extract"

CRITERIA = {
    1: "arithmetic figures reproduce",
    2: "precision z-test",
    3: "relative-delta arithmetic",
    4: "weighted kappa vs brute-force oracle",
    5: "rubric fixtures and deterministic report",
    6: "evidence grounding and mutation fuzz",
    7: "agent output contract",
    8: "faceted search vs brute-force oracle",
    9: "extraction round trip and validity partition",
    10: "hybrid fallback ordering",
}

_outcomes: dict[int, list[tuple[str, str]]] = {}


@pytest.fixture
def world(tmp_path) -> Path:
    """A private copy of the offline fixture world; run output lands inside it."""
    dst = tmp_path / "world"
    shutil.copytree(WORLD, dst, ignore=shutil.ignore_patterns("out"))
    return dst


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            outcome = "xfail"
        else:
            outcome = report.outcome
        _outcomes.setdefault(marker, []).append((report.nodeid, outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        report._acceptance = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        results = _outcomes.get(n)
        if not results:
            continue
        failed = [(nid, o) for nid, o in results if o != "passed"]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {n:2d} {status}  {CRITERIA[n]} ({len(results) - len(failed)}/{len(results)} checks)"
        terminalreporter.write_line(line)
        for nid, o in failed:
            note = " (known unattainable, strict xfail)" if o == "xfail" else ""
            terminalreporter.write_line(f"    failing check: {nid}{note}")
