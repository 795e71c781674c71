import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from roughflow.driver import TimeGrid, build_bm_lift, lift_function

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def unit_grid():
    return TimeGrid(0.0, 1.0, 65)


@pytest.fixture
def bm1(unit_grid):
    return build_bm_lift(11, unit_grid, 1, 16, 0.45)


@pytest.fixture
def smooth1(unit_grid):
    return lift_function(lambda t: np.sin(2 * t)[..., None], unit_grid, 0.5)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
