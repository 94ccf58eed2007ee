import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from apalloc.model import Problem

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_problem(rng: np.random.Generator, n: int, l: int, tight: bool = True,
                   tau: float = 0.0) -> Problem:
    """Small mixed elephant/mouse instance with sparse links."""
    q = rng.uniform(0.01, 0.03, size=(n, l)) * (rng.random((n, l)) < 0.7)
    elephant = rng.random(n) < 0.4
    rate = np.where(elephant, rng.uniform(1.0, 3.0, n), rng.uniform(0.1, 0.5, n))
    ap_elephant = rng.random(l) < 0.5
    if tight:
        capacity = np.where(ap_elephant, rng.uniform(2.0, 5.0, l), rng.uniform(0.2, 0.8, l))
    else:
        capacity = np.full(l, 100.0)
    return Problem(q, rate, elephant, ap_elephant, capacity, tau)


@st.composite
def problems(draw, max_n: int = 6, max_l: int = 4):
    n = draw(st.integers(0, max_n))
    l = draw(st.integers(1, max_l))
    seed = draw(st.integers(0, 2**31 - 1))
    return random_problem(np.random.default_rng(seed), n, l)


@st.composite
def assignments_for(draw, problem: Problem):
    return np.array([draw(st.integers(-1, problem.l - 1)) for _ in range(problem.n)],
                    dtype=np.int64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
