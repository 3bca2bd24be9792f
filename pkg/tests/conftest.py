import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from localmax.weights import (capped_exponent, capped_multiplicative, full_simplex,
                              lower_bounded, singleton, smoothing_segment, uniform_cap)

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []  # (criterion number, line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_dist(rng, n, floor=0.0):
    p = rng.dirichlet(np.full(n, 0.7)) + floor
    return p / p.sum()


def random_set(rng, n, family):
    """One member of each weight-set family, with random parameters."""
    p = random_dist(rng, n)
    if family == "exponent":
        return capped_exponent(p, rng.uniform(0, 1), rng.uniform(0, 1))
    if family == "multiplicative":
        return capped_multiplicative(p, 0.5, rng.uniform(2, 8))
    if family == "lower-bounded":
        return lower_bounded(n, rng.uniform(0, 1))
    if family == "uniform-cap":
        return uniform_cap(n, rng.uniform(1.0 / n, 1.0))
    if family == "singleton":
        return singleton(p)
    if family == "max":
        return full_simplex(n)
    if family == "segment":
        return smoothing_segment(p)
    raise ValueError(family)


@st.composite
def cap_sets(draw, n_min=1, n_max=4):
    """Cap-form weight sets with random base, scale and caps."""
    n = draw(st.integers(n_min, n_max))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    family = draw(st.sampled_from(["exponent", "multiplicative", "lower-bounded",
                                   "uniform-cap", "singleton", "max"]))
    return random_set(np.random.default_rng(seed), n, family)
