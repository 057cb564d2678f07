import numpy as np
import pytest

from cbtrees.offspring import CauchyFamily, TableDistribution


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


@pytest.fixture(scope="session")
def cauchy():
    return CauchyFamily(1.0, 1.0, 0.5)


@pytest.fixture(scope="session")
def cauchy_half():
    return CauchyFamily(0.5, 1.0, 0.5)


@pytest.fixture(scope="session")
def cauchy_tight():
    return CauchyFamily(1.5, 1.0, 0.5)


@pytest.fixture
def binary():
    return TableDistribution([0.5, 0.5])


@pytest.fixture
def table3():
    return TableDistribution([0.6, 0.2, 0.2])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    k = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = "; ".join(str(v) for name, v in item.user_properties if name == "detail")
        _ACCEPTANCE[k] = (rep.outcome, detail, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        outcome, detail, name = _ACCEPTANCE[k]
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {tag}  {name}  {detail}")
