import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from manifold_tv import SPD, Circle, Euclidean, Product, Sphere

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# Acceptance lines collected by tests/test_acceptance.py, echoed in the summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


GEOMETRIES = {
    "R3": Euclidean(3),
    "S1": Circle(),
    "S2": Sphere(2),
    "S3": Sphere(3),
    "P2": SPD(2),
    "P3": SPD(3),
}


def all_geometries(include_product=True):
    out = dict(GEOMETRIES)
    if include_product:
        out["S2xR1"] = Product([Sphere(2), Euclidean(1)])
    return out


def near_pair(M, rng, n=(), scale=0.6):
    """Random x and a nearby y = exp(x, v) with |v| of order ``scale``."""
    x = M.random_point(rng, n)
    y = M.exp(x, M.random_tangent(rng, x, scale=scale))
    return x, y


def spread_points(M, rng, count, n=(), scale=0.6):
    """``count`` points scattered around a common random center."""
    c = M.random_point(rng, n)
    return [M.exp(c, M.random_tangent(rng, c, scale=scale)) for _ in range(count)]
