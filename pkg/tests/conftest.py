from functools import lru_cache

import numpy as np
import pytest

from wedgewulff import fixtures
from wedgewulff.scenario import scenario_from_dict


@lru_cache(maxsize=None)
def built(name):
    """Built-in scenario, constructed once per session (patches cache their samples)."""
    return scenario_from_dict(fixtures.fixture(name))


@pytest.fixture
def scenario():
    return built


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary -------------------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    _, ok, count = _CRITERIA.get(number, (title, True, 0))
    _CRITERIA[number] = (title, ok and not rep.failed, count + (rep.when == "call"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, count = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title} ({count} tests)")
