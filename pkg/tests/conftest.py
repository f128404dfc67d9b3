import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from halfline.grid import Grid, StepFunction, Weight

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_grid(rng, n, T=None):
    widths = rng.exponential(1.0, n) + 1e-3
    if T is not None:
        widths *= T / widths.sum()
    t = np.concatenate([[0.0], np.cumsum(widths)])
    if T is not None:
        t[-1] = T
    return Grid(t)


def random_step(rng, n, T=None, positive=False):
    g = random_grid(rng, n, T)
    v = rng.uniform(0.05, 3.0, n) if positive else rng.normal(0.0, 1.0, n)
    return StepFunction(g, v)


@st.composite
def step_functions(draw, min_n=1, max_n=40, positive=False):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_step(np.random.default_rng(seed), n, positive=positive)


@st.composite
def weights(draw, min_n=2, max_n=40):
    f = draw(step_functions(min_n, max_n, positive=True))
    return Weight(f.grid, f.values)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
