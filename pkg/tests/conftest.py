import os

import hypothesis
import numpy as np
import pytest

from app.models.system import Modulation, SystemConfig

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=50, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "ci"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def three_user() -> SystemConfig:
    """Unequal-power reference MAC: g = (1, 2, 4)/7, unit noise, sum rate 1 bpcu."""
    return SystemConfig(K=3, g=(1 / 7, 2 / 7, 4 / 7), noise_var=1.0, modulation=Modulation.QPSK)


@pytest.fixture
def gaussian_three_user(three_user) -> SystemConfig:
    return three_user.model_copy(update={"modulation": Modulation.GAUSSIAN})


@pytest.fixture
def monotone_points():
    """Factory of random valid breakpoints: each coordinate sorted downwards between the endpoints."""

    def make(rng: np.random.Generator, K: int, segments: int) -> list[list[float]]:
        inner = np.sort(rng.uniform(0.05, 0.95, size=(segments - 1, K)), axis=0)[::-1]
        return [[1.0] * K] + inner.tolist() + [[0.0] * K]

    return make
