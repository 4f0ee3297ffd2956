import functools

import pytest

from mechsolve import InterferenceModel, ProblemInstance, TruncatedGaussian, Uniform, solve_mechanism

GAUSS = TruncatedGaussian(0.0, 10.0, 5.0, 7.0)
UNIT = Uniform(0.0, 1.0)


def gaussian_instance(model: str, v: float = 6.0, K: float = 20.0) -> ProblemInstance:
    return ProblemInstance(InterferenceModel(model), v, K, GAUSS, GAUSS)


@functools.lru_cache(maxsize=None)
def solved(model: str, v: float = 6.0, K: float = 20.0):
    return solve_mechanism(gaussian_instance(model, v, K))


# Gaussian benchmark instances: (model, v, K)
GAUSSIAN_CONFIGS = [
    (m, v, K)
    for m in ("independent", "power")
    for v, K in ((6.0, 20.0), (6.0, 25.0), (6.0, 50.0), (2.0, 20.0), (4.0, 20.0))
]


@pytest.fixture
def gauss():
    return GAUSS


@pytest.fixture
def unit():
    return UNIT


# one PASS/FAIL line per acceptance criterion, printed in the terminal summary
_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    passed = report.passed and _criteria.get(number, (title, True))[1]
    _criteria[number] = (title, passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, passed = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}")
