import numpy as np
import pytest

from grail.graphs import Graph, GraphDataset, random_split


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for k in range(xf.size):
        bump = np.zeros_like(xf)
        bump[k] = h
        flat[k] = (f((xf + bump).reshape(x.shape))
                   - f((xf - bump).reshape(x.shape))) / (2 * h)
    return grad


def assert_grads_match(analytic: np.ndarray, numeric: np.ndarray,
                       rtol: float = 1e-4, atol: float = 1e-7) -> None:
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol / rtol)
    rel = np.abs(analytic - numeric) / denom
    worst = float(rel.max()) if rel.size else 0.0
    assert worst <= rtol, f"gradient mismatch: max relative error {worst:.3e}"


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4,
                 feature_dim: int = 3, labels: bool = True) -> Graph:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
    node_labels = rng.integers(0, 2, size=n) if labels else None
    return Graph(num_nodes=n, edges=edges,
                 features=rng.standard_normal((n, feature_dim)),
                 node_labels=node_labels)


def tiny_node_dataset(seed: int = 0, n: int = 12, num_classes: int = 2,
                      p: float = 0.4) -> GraphDataset:
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p)
    train, test = random_split(n, 0.7, seed)
    return GraphDataset(graphs=(g,), task="node", num_classes=num_classes,
                        train_indices=train, test_indices=test)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
