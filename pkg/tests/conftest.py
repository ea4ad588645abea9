import numpy as np
import pytest

from linkattack.graph import DirectedGraph
from linkattack.harness import generate_synthetic
from linkattack.model import LinkPredictor, TrainConfig, split_edges, train

SMALL = TrainConfig(hidden1=16, hidden2=8, decoder_hidden=4, epochs=300, lr=1e-2, seed=0)


def tiny_model(k: int, seed: int = 0, hidden=(6, 5, 3)) -> LinkPredictor:
    """Randomly initialized predictor with non-trivial biases and a fitted standardizer."""
    cfg = TrainConfig(hidden1=hidden[0], hidden2=hidden[1], decoder_hidden=hidden[2], seed=seed)
    m = LinkPredictor.init(k, cfg)
    rng = np.random.default_rng(seed + 1)
    m["b1"].values[:] = rng.normal(scale=0.3, size=m["b1"].shape)
    m["b2"].values[:] = rng.normal(scale=0.3, size=m["b2"].shape)
    return m


@pytest.fixture(scope="session")
def small_graph() -> DirectedGraph:
    return generate_synthetic("erdos_renyi", 40, 0.08, 6, seed=0)


@pytest.fixture(scope="session")
def small_model(small_graph) -> LinkPredictor:
    split = split_edges(small_graph, 0.9, seed=0)
    model, _ = train(small_graph, split, SMALL)
    return model
