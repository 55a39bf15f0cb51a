from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from symspace.stepfn import StepFunction

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DENOM = 2**20


@st.composite
def step_functions(draw, max_blocks=8, signed=True, dyadic_deep=False):
    """Random step function on (0, 1] with rational or deep dyadic cuts."""
    k = draw(st.integers(1, max_blocks))
    if dyadic_deep:
        exps = draw(st.lists(st.integers(1, 400), min_size=k - 1, max_size=k - 1, unique=True))
        cuts = sorted(Fraction(1, 2**e) for e in exps)
    else:
        nums = draw(st.lists(st.integers(1, DENOM - 1), min_size=k - 1, max_size=k - 1, unique=True))
        cuts = sorted(Fraction(n, DENOM) for n in nums)
    lo = -1e3 if signed else 0.0
    vals = draw(
        st.lists(
            st.floats(lo, 1e3, allow_nan=False, allow_subnormal=False),
            min_size=len(cuts) + 1,
            max_size=len(cuts) + 1,
        )
    )
    return StepFunction((Fraction(0), *cuts, Fraction(1)), tuple(vals))


def random_step(rng: np.random.Generator, max_blocks=10, signed=True) -> StepFunction:
    k = int(rng.integers(1, max_blocks + 1))
    nums = sorted(set(int(n) for n in rng.integers(1, DENOM, size=k - 1)))
    cuts = [Fraction(n, DENOM) for n in nums]
    vals = rng.uniform(-10 if signed else 0, 10, size=len(cuts) + 1)
    return StepFunction((Fraction(0), *cuts, Fraction(1)), tuple(float(v) for v in vals))


def dominated_pair(rng: np.random.Generator, max_blocks=10):
    """(x, y) with |x| <= |y| pointwise."""
    y = random_step(rng, max_blocks)
    shrink = random_step(rng, max_blocks, signed=False).map(lambda v: v / 10)
    x = y.combine(shrink, lambda a, s: a * s)
    return x, y


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
