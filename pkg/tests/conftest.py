import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bispectral import pipeline, sht, so3

settings.register_profile(
    "suite", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def table6():
    return so3.build_cg_table(6)


@pytest.fixture(scope="session")
def table15():
    return so3.build_cg_table(15)


@pytest.fixture(scope="session")
def plan30():
    return sht.build_projection_plan(30, L=15, a=2.0)


@pytest.fixture(scope="session")
def demo_digits():
    return pipeline.make_demo_digits()


def random_coeffs(L, rng):
    n = (L + 1) ** 2
    return sht.SphereCoeffs(
        L=L, values=rng.standard_normal(n) + 1j * rng.standard_normal(n))
