import numpy as np
import pytest

from stmra import CovarianceModel, PointDataset, SpaceTimeExtent

UNIT = SpaceTimeExtent((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
STUDY_THETA = (0.2, 0.05, 0.05, 0.02)


def random_points(n, rng, extent=UNIT):
    lo, size = extent.lo_array, extent.size
    return lo + rng.random((n, 3)) * size


def lonlat_points(n, rng):
    return np.column_stack([rng.uniform(-180, 180, n), rng.uniform(-80, 80, n), rng.uniform(0, 10, n)])


def sample_dataset(n, cov, rng, extent=UNIT):
    """Exact draw at random locations (dense; small n only)."""
    X = random_points(n, rng, extent)
    K = cov.matrix(X)
    y = np.linalg.cholesky(K + 1e-12 * np.eye(n)) @ rng.standard_normal(n)
    return PointDataset(X, y)


# one valid parameter vector and matching point generator per family
FAMILY_CASES = {
    "metric_exponential": ((0.3, 1.0, 0.1, 0.5), None, "unit"),
    "separable_exp": ((1.0, 0.4, 0.6, 0.1, 0.2), None, "unit"),
    "nonseparable_sphere": ((1.0, 2000.0, 3.0, 0.1), "great_circle", "lonlat"),
    "nonstationary_kernelconv": (
        (1.0, 0.1, 0.6, 0.1) + (1.0,) * 9 + (0.05,) * 9 + (0.08,) * 9,
        "euclidean",
        "unit",
    ),
}


def family_model(name):
    theta, metric, _ = FAMILY_CASES[name]
    return CovarianceModel(name, theta, metric)


def family_points(name, n, rng):
    if FAMILY_CASES[name][2] == "lonlat":
        return lonlat_points(n, rng)
    return random_points(n, rng)


def family_extent(name):
    if FAMILY_CASES[name][2] == "lonlat":
        return SpaceTimeExtent((-180.0, -80.0, 0.0), (180.0, 80.0, 10.0))
    return UNIT


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one pass/fail line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
