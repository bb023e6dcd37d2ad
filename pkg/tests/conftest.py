import sys

import numpy as np
import pytest

from dperm.objective import LabeledDataset


def random_dataset(rng, n, s, intercept=True, kappa=1.0):
    """Rows with l1 norm <= kappa and labels from a noisy linear rule."""
    feats = rng.uniform(-1.0, 1.0, size=(n, s))
    if intercept:
        feats[:, 0] = 1.0
    feats *= kappa / np.abs(feats).sum(axis=1).max()
    w = rng.normal(size=s)
    y = np.where(rng.random(n) < 1.0 / (1.0 + np.exp(-3.0 * feats @ w)), 1, -1)
    return LabeledDataset(feats, y, kappa=kappa)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset(rng):
    return random_dataset(rng, 40, 3)


TOY_X = np.array([[1.0], [0.8], [-0.5], [0.3], [-1.0], [0.6]])
TOY_Y = np.array([1, 1, -1, 1, -1, -1])


def toy_pair():
    """Six one-feature records and the neighbour with record 0's label flipped."""
    d = LabeledDataset(TOY_X, TOY_Y, kappa=1.0)
    return d, d.replace_record(0, TOY_X[0], -TOY_Y[0])


def toy_releases(dataset, epsilon, count, seed, release_epsilon=None):
    """First coordinate of ``count`` private fits under ridge lambda = convex_min."""
    from dperm.mechanism import fit_private, min_strong_convexity
    from dperm.objective import ElasticNetSpec
    from dperm.seeding import derive_seed

    eps = epsilon if release_epsilon is None else release_epsilon
    enet = ElasticNetSpec(min_strong_convexity(1.0, dataset.n, eps), 0.0)
    return np.array([
        fit_private(dataset, enet, eps, seed=derive_seed(seed, "toy", i)).theta[0]
        for i in range(count)
    ])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
