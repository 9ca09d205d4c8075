import numpy as np
import pytest

from metaflex.core import ArmData, MetaDataset
from metaflex.datagen import GenConfig, generate_dataset, get_scenario


@pytest.fixture
def scenario1_data():
    """One 14-study dataset from the normal, tau2 = 0.12 scenario."""
    d, theta = generate_dataset(get_scenario(1), GenConfig(), np.random.default_rng(20240))
    return d, theta


@pytest.fixture
def small_arms():
    return MetaDataset((
        ArmData("A", 12, 100, 20, 100),
        ArmData("B", 8, 120, 15, 118),
        ArmData("C", 30, 200, 33, 210),
        ArmData("D", 5, 80, 9, 75),
        ArmData("F", 14, 90, 25, 95),
    ))


# -- acceptance reporting ------------------------------------------------------

_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record ``(passed, detail)`` for a numbered acceptance criterion."""
    log = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def record(number, passed, detail):
        log[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, None)
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        if n in log:
            ok, detail = log[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
