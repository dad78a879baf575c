import numpy as np
import pytest

from data_io import make_two_cluster
from sdr_classifier import build_instance


@pytest.fixture
def demo_matrix():
    return np.array([[2.0, -2.0, -1.0], [-2.0, 5.0, -2.0], [-1.0, -2.0, 4.0]])


@pytest.fixture
def line_laplacian():
    """3-node path with unit weights"""
    return np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])


@pytest.fixture
def three_node_instance(line_laplacian):
    return build_instance(line_laplacian, [0, 1], [1, -1])


@pytest.fixture
def random_laplacian():
    """Factory for dense positive-graph Laplacians"""
    def make(rng, n, density=0.6):
        W = rng.uniform(0.1, 1.0, size=(n, n)) * (rng.uniform(size=(n, n)) < density)
        W = np.triu(W, k=1)
        W = W + W.T
        return np.diag(W.sum(axis=1)) - W
    return make


@pytest.fixture
def random_instance(random_laplacian):
    """Factory for instances with both classes among the m labeled samples"""
    def make(rng, n, m):
        L = random_laplacian(rng, n)
        indices = rng.permutation(n)[:m]
        labels = np.array([1, -1] + list(rng.choice([-1, 1], size=m - 2)))
        return build_instance(L, indices, labels)
    return make


@pytest.fixture
def two_cluster():
    """Factory: (dataset, labeled indices) of two separated Gaussian clusters"""
    def make(seed, n=10, m=4, separation=6.0):
        return make_two_cluster(n=n, m=m, separation=separation, seed=seed)
    return make


@pytest.fixture
def settings_env(tmp_path, monkeypatch):
    """Isolated results dir, sqlite database and no log file"""
    from config import get_settings

    monkeypatch.setenv("GDPA_SDR_RESULTS_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("GDPA_SDR_DB_URL", f"sqlite:///{tmp_path / 'experiments.db'}")
    monkeypatch.setenv("GDPA_SDR_LOG_FILE", "")
    monkeypatch.setenv("GDPA_SDR_THREADS", "2")
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()
