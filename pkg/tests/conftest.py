import hypothesis
import numpy as np
import pytest

from planopt.situations import learn_situations, make_ranges
from planopt.space import CROWDNAV_SPACE
from planopt.surrogate import MiniNav

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def space():
    return CROWDNAV_SPACE


@pytest.fixture(scope="session")
def mininav():
    return MiniNav()


@pytest.fixture(scope="session")
def learned_model(mininav):
    return learn_situations(mininav, make_ranges(100, 800, 50), samples_per_state=1000, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
