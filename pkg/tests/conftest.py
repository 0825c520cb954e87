import re

import pytest

from ls2d import discretization as disc
from ls2d.experiments import setup

_criteria = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m or report.when not in ("setup", "call"):
        return
    num, name = int(m.group(1)), m.group(2)
    if report.when == "setup" and report.passed:
        return
    detail = "; ".join(f"{k}={v}" for k, v in report.user_properties)
    _criteria[num] = (name, report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        name, outcome, detail = _criteria[num]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {name.replace('_', ' ')}  {detail}")


def gaussian_spec(n, kappa=25.0, order=4):
    grid = disc.build_grid(disc.UNIT_SQUARE, 1.0 / n)
    return disc.ProblemSpec(kappa, disc.Gaussian(), grid, disc.PlaneWave(offset=-0.5), order)


@pytest.fixture(scope="session")
def gauss1600():
    return setup(gaussian_spec(40))


@pytest.fixture(scope="session")
def gauss6400():
    return setup(gaussian_spec(80))
