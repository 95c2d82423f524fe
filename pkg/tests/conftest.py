import numpy as np
import pytest
import scipy.sparse as sp

from coarsenkit.datagen import GraphModel, generate_graph, sample_gmrf_features
from coarsenkit.graph import GraphData, laplacian_from_weights

# five-node, five-edge example graph and its three-supernode grouping
TOY_WEIGHTS = {(0, 1): 2.0, (0, 2): 3.0, (0, 3): 1.0, (1, 2): 4.0, (2, 4): 5.0}
TOY_LABELS = np.array([0, 0, 0, 1, 2])
TOY_X = np.array([[0.4, 0.7], [0.2, 0.6], [0.5, 0.2], [0.1, 0.3], [0.3, 0.6]])


def toy_theta():
    w = np.zeros((5, 5))
    for (i, j), v in TOY_WEIGHTS.items():
        w[i, j] = w[j, i] = v
    return laplacian_from_weights(w)


def random_connected_graph(rng, p, n=None, density=0.3):
    """Random connected weighted graph (spanning path plus random chords)."""
    w = np.zeros((p, p))
    order = rng.permutation(p)
    for a, b in zip(order[:-1], order[1:]):
        w[a, b] = w[b, a] = rng.uniform(0.5, 3.0)
    chords = np.triu(rng.random((p, p)) < density, k=1)
    vals = rng.uniform(0.5, 3.0, size=(p, p))
    w = np.where(chords & (w == 0), vals, w)
    w = np.triu(w, 1)
    w = w + w.T
    x = None if n is None else rng.standard_normal((p, n))
    return GraphData(laplacian_from_weights(w), x)


def random_binary_loading(rng, p, k):
    labels = np.concatenate([np.arange(k), rng.integers(0, k, size=p - k)])
    rng.shuffle(labels)
    c = np.zeros((p, k))
    c[np.arange(p), labels] = 1.0
    return c


@pytest.fixture
def toy():
    return GraphData(toy_theta(), TOY_X, "toy")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def smooth_er_graph():
    g = generate_graph(GraphModel("er", 40, prob=0.2), seed=3)
    return g.with_features(sample_gmrf_features(g.laplacian, 12, seed=4))


def dense(a):
    return a.toarray() if sp.issparse(a) else np.asarray(a)


# one line per acceptance criterion, filled by test_acceptance and shown after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
