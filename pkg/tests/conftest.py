from __future__ import annotations

import pytest

from govkernel.sim.config import builtin_config
from govkernel.sim.scenario import World

# criterion number -> (title, outcomes of its tests)
_criteria: dict[int, tuple[str, list[str]]] = {}
_criterion_of: dict[str, int] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is None:
            continue
        n = m.kwargs["criterion"]
        _criterion_of[item.nodeid] = n
        title = m.kwargs.get("title") or _criteria.get(n, ("", []))[0]
        _criteria[n] = (title, _criteria.get(n, ("", []))[1])


def pytest_runtest_logreport(report):
    n = _criterion_of.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _criteria[n][1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, outcomes = _criteria[n]
        if not outcomes:
            verdict = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            verdict = "PASS"
        else:
            verdict = "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} [{verdict}] {title}")


@pytest.fixture(scope="session")
def nominal_run():
    """The shipped nominal run-all scenario, executed once per session."""
    world = World(builtin_config("nominal"))
    return world, world.run()
