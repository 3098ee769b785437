import numpy as np
import pytest

from dualfuse.models import ImuSample, StateEstimate
from dualfuse.quat import random_quat


def random_state(rng, bias_scale=0.05):
    return StateEstimate(
        q=random_quat(rng),
        r=rng.normal(size=3) * 10.0,
        v=rng.normal(size=3),
        b=rng.normal(size=3) * bias_scale,
    )


def random_input(rng):
    return ImuSample(0.0, rng.normal(size=3) * 0.5, rng.normal(size=3) * 2.0 + np.array([0.0, 0.0, 9.81]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
