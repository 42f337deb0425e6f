import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from convex_billiards.curve import SupportCurve, build_classC, circle, ellipse

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def curve_of(*terms):
    return SupportCurve(tuple(terms))


@pytest.fixture(scope="session")
def unit_circle():
    return circle()


@pytest.fixture(scope="session")
def cos2():
    return curve_of((0, 1.0, 0.0), (2, 0.1, 0.0))


@pytest.fixture(scope="session")
def cos3():
    return curve_of((0, 1.0, 0.0), (3, 0.1, 0.0))


@pytest.fixture(scope="session")
def wobbly():
    # no symmetry at all
    return curve_of((0, 1.0, 0.0), (2, 0.05, 0.02), (3, 0.03, 0.0), (5, 0.01, 0.004))


@pytest.fixture(scope="session")
def ellipse21():
    return ellipse(2.0, 1.0)


@pytest.fixture(scope="session")
def cos6_class_c():
    return build_classC([(0, 1.0, 0.0), (6, 0.05, 0.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
