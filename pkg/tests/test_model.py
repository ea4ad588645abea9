import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linkattack import autodiff as ad
from linkattack.autodiff import Tape, Tensor
from linkattack.graph import DirectedGraph
from linkattack.harness import generate_synthetic
from linkattack.model import (LinkPredictor, TrainConfig, accuracy, auroc, evaluate, sample_non_edges,
                              split_edges, train)

from conftest import tiny_model
from oracles import auroc_pairs, central_diff, gcn_forward_loops, random_digraph, rel_err


# ---------------------------------------------------------------- encoder


def test_empty_graph_embedding_is_local():
    rng = np.random.default_rng(0)
    m = tiny_model(3)
    x = rng.random((5, 3))
    h = m.embed(np.zeros((5, 5)), x)
    for i in range(5):
        single = m.embed(np.zeros((1, 1)), x[i:i + 1])
        np.testing.assert_allclose(h[i], single[0], atol=1e-14)


def test_permutation_equivariance():
    rng = np.random.default_rng(1)
    a = random_digraph(rng, 7, 0.3)
    x = rng.random((7, 3))
    m = tiny_model(3)
    perm = rng.permutation(7)
    h = m.embed(a, x)
    hp = m.embed(a[np.ix_(perm, perm)], x[perm])
    np.testing.assert_allclose(hp, h[perm], atol=1e-12)


def test_forward_matches_loop_oracle():
    a = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
    x = np.array([[1.0, 0.0], [0.5, -1.0], [0.0, 2.0]])
    m = tiny_model(2, seed=4)
    want = gcn_forward_loops(a, m.standardize(x), m["W1"].values, m["W2"].values)
    np.testing.assert_allclose(m.embed(a, x), want, atol=1e-13)


def test_encode_shape_errors():
    m = tiny_model(3)
    with pytest.raises(ad.DimensionError):
        m.embed(np.zeros((4, 4)), np.zeros((3, 3)))
    with pytest.raises(ad.DimensionError):
        m.embed(np.zeros((3, 3)), np.zeros((3, 2)))


def test_encode_gradient_wrt_adjacency():
    for seed in range(4):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 7))
        a0 = rng.uniform(0.05, 0.95, size=(n, n))
        x = rng.random((n, 3))
        m = tiny_model(3, seed=seed)
        probe = rng.normal(size=(n, m["W2"].cols))

        def f(a):
            return float((m.embed(a, x) * probe).sum())

        t = Tensor(a0, requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(m.encode(t, Tensor(x)), Tensor(probe)))
        tape.backward(loss)
        assert rel_err(t.grad, central_diff(f, a0), floor=1e-6) < 1e-4


def test_encode_gradient_wrt_features():
    rng = np.random.default_rng(9)
    a = random_digraph(rng, 5, 0.4)
    x0 = rng.random((5, 3))
    m = tiny_model(3, seed=2)
    m.fit_standardizer(rng.random((10, 3)))
    xt = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_all(m.encode(Tensor(a), xt))
    tape.backward(loss)
    num = central_diff(lambda x: float(m.embed(a, x).sum()), x0)
    assert rel_err(xt.grad, num, floor=1e-6) < 1e-4


# ---------------------------------------------------------------- decoder


def test_zero_embeddings_zero_bias_give_half():
    m = tiny_model(3)
    m["b1"].values[:] = 0.0
    m["b2"].values[:] = 0.0
    assert m.predict_link(np.zeros((1, 5)), np.zeros((1, 5))).item() == 0.5


def test_toy_decoder_by_hand():
    params = {"W1": np.eye(2), "W2": np.eye(2), "M1": np.array([[1.0, -1.0], [2.0, 0.5]]),
              "b1": np.array([[0.1, 0.2]]), "M2": np.array([[1.5], [-2.0]]), "b2": np.array([[0.3]])}
    m = LinkPredictor(params, TrainConfig(hidden1=2, hidden2=2, decoder_hidden=2))
    hu, hv = np.array([[1.0, 2.0]]), np.array([[0.5, -1.0]])
    had = hu * hv                                 # [0.5, -2]
    z = np.maximum(had @ params["M1"] + params["b1"], 0)  # [-3.5+0.1, -0.5-1+0.2] -> [0, 0]
    logit = (z @ params["M2"] + params["b2"]).item()
    assert m.predict_link(hu, hv).item() == pytest.approx(1 / (1 + np.exp(-logit)), abs=1e-15)
    hv2 = np.array([[2.0, 1.0]])
    z2 = np.maximum((hu * hv2) @ params["M1"] + params["b1"], 0)
    want = 1 / (1 + np.exp(-((z2 @ params["M2"]).item() + 0.3)))
    assert m.predict_link(hu, hv2).item() == pytest.approx(want, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_decoder_symmetric_and_in_range(seed):
    rng = np.random.default_rng(seed)
    m = tiny_model(3, seed=seed % 7)
    # embedding scale of a trained encoder; far larger logits saturate float64 at exactly 0 or 1
    hu, hv = rng.normal(size=(1, 5)), rng.normal(size=(1, 5))
    p = m.predict_link(hu, hv).item()
    assert p == m.predict_link(hv, hu).item()
    assert 0.0 < p < 1.0


# ---------------------------------------------------------------- metrics


def test_metric_examples():
    assert accuracy([0.9], [0.1]) == 1.0
    assert auroc([0.9], [0.1]) == 1.0
    assert auroc([0.3, 0.3], [0.3, 0.3, 0.3]) == 0.5
    assert accuracy([0.59], [0.6]) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 10_000))
def test_auroc_matches_pairwise_oracle(n_pos, n_neg, seed):
    rng = np.random.default_rng(seed)
    pos = rng.integers(0, 5, size=n_pos) / 4.0  # coarse grid forces ties
    neg = rng.integers(0, 5, size=n_neg) / 4.0
    assert auroc(pos, neg) == pytest.approx(auroc_pairs(pos, neg), abs=1e-12)
    assert 0.0 <= auroc(pos, neg) <= 1.0


def test_auroc_random_20_and_monotone_invariance():
    rng = np.random.default_rng(20)
    s = rng.random(20)
    pos, neg = s[:9], s[9:]
    assert auroc(pos, neg) == pytest.approx(auroc_pairs(pos, neg), abs=1e-12)
    assert auroc(np.exp(3 * pos), np.exp(3 * neg)) == auroc(pos, neg)


def test_metric_errors():
    with pytest.raises(ValueError):
        auroc([], [0.2])
    with pytest.raises(ValueError):
        accuracy([], [])


# ---------------------------------------------------------------- split and sampling


def test_split_partitions_edges(small_graph):
    split = split_edges(small_graph, 0.9, seed=3)
    split.validate(small_graph)
    assert len(split.test) == round(0.1 * small_graph.n_edges) or abs(
        len(split.test) - 0.1 * small_graph.n_edges) < 1
    assert len(split.train_negatives) == len(split.train)
    assert len(split.test_negatives) == len(split.test)


def test_sample_non_edges_are_non_edges():
    rng = np.random.default_rng(0)
    a = random_digraph(rng, 12, 0.4)
    pairs = sample_non_edges(a, 50, rng)
    for u, v in pairs:
        assert u != v and a[u, v] == 0


def test_evaluate_empty_test_set(small_graph, small_model):
    split = split_edges(small_graph, 1.0, seed=0)
    with pytest.raises(ValueError):
        evaluate(small_model, small_graph, split)


# ---------------------------------------------------------------- training


def test_zero_epochs_returns_init(small_graph):
    cfg = TrainConfig(hidden1=8, hidden2=4, decoder_hidden=2, epochs=0)
    split = split_edges(small_graph, 0.9, 0)
    model, hist = train(small_graph, split, cfg)
    init = LinkPredictor.init(small_graph.n_features, cfg)
    for k in ("W1", "W2", "M1", "M2"):
        np.testing.assert_array_equal(model[k].values, init[k].values)
    assert hist.losses == []


def test_training_reduces_loss_and_is_deterministic():
    g = generate_synthetic("erdos_renyi", 50, 0.1, 8, seed=2)
    cfg = TrainConfig(hidden1=16, hidden2=8, decoder_hidden=4, epochs=60, seed=1)
    split = split_edges(g, 0.9, 1)
    m1, h1 = train(g, split, cfg)
    m2, h2 = train(g, split, cfg)
    assert h1.losses[-1] <= h1.losses[0]
    assert h1.losses == h2.losses
    for k in ("W1", "b2"):
        assert np.array_equal(m1[k].values, m2[k].values)
    assert not any(p.requires_grad for p in m1.tensors())


def test_separable_cliques_train_to_perfect_accuracy():
    n = 8
    a = np.zeros((n, n))
    a[:4, :4] = 1
    a[4:, 4:] = 1
    np.fill_diagonal(a, 0)
    x = np.zeros((n, 2))
    x[:4, 0] = 1.0
    x[4:, 1] = 1.0
    g = DirectedGraph(a, x)
    split = split_edges(g, 1.0, 0)
    cross = np.array([(u, v) for u in range(n) for v in range(n) if (u < 4) != (v < 4)])
    cfg = TrainConfig(hidden1=8, hidden2=8, decoder_hidden=4, epochs=400, lr=1e-2, seed=0)
    model, _ = train(g, split, cfg)
    h = model.embed(a, x)
    pos = model.score_pairs(h, split.train)
    neg = model.score_pairs(h, cross)
    assert accuracy(pos, neg) == 1.0


def test_small_model_beats_chance(small_graph, small_model):
    split = split_edges(small_graph, 0.9, seed=0)
    h = small_model.embed(small_graph.adjacency, small_graph.features)
    assert auroc(small_model.score_pairs(h, split.train), small_model.score_pairs(h, split.train_negatives)) > 0.6


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip_exact(tmp_path, small_model, small_graph):
    path = tmp_path / "m.json"
    small_model.save(path)
    back = LinkPredictor.load(path)
    for k in ("W1", "W2", "M1", "b1", "M2", "b2"):
        assert np.array_equal(back[k].values, small_model[k].values)
    np.testing.assert_array_equal(back.feature_std, small_model.feature_std)
    assert back.config == small_model.config
    a, x = small_graph.adjacency, small_graph.features
    assert np.array_equal(back.embed(a, x), small_model.embed(a, x))


def test_checkpoint_rejects_foreign_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValueError):
        LinkPredictor.load(p)
    d = tiny_model(2).to_dict()
    d["version"] = 99
    with pytest.raises(ValueError):
        LinkPredictor.from_dict(d)
