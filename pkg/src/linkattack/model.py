"""GCN-style encoder with a Hadamard MLP decoder for directed link prediction."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import autodiff as ad
from .autodiff import Tensor
from .graph import DirectedGraph

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "linkattack-checkpoint"
CHECKPOINT_VERSION = 1
DECISION_THRESHOLD = 0.6
PARAM_NAMES = ("W1", "W2", "M1", "b1", "M2", "b2")


@dataclass
class TrainConfig:
    hidden1: int = 128
    hidden2: int = 64
    decoder_hidden: int = 32
    epochs: int = 2000
    lr: float = 1e-3
    train_ratio: float = 0.9
    seed: int = 0
    # "full": propagate over every observed edge; "train": hide test edges
    message_passing: str = "full"


@dataclass
class EdgeSplit:
    train: np.ndarray
    test: np.ndarray
    train_negatives: np.ndarray
    test_negatives: np.ndarray

    def validate(self, g: DirectedGraph) -> None:
        all_edges = {tuple(e) for e in g.edges()}
        tr = {tuple(e) for e in self.train}
        te = {tuple(e) for e in self.test}
        if tr & te or (tr | te) != all_edges:
            raise ValueError("train/test edges must partition the edge set")
        for u, v in np.vstack([self.train_negatives, self.test_negatives]):
            if g.adjacency[u, v] or u == v:
                raise ValueError(f"negative sample ({u}, {v}) is not a non-edge")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def sample_non_edges(adjacency: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample (with replacement) of ordered pairs u != v with no edge u->v."""
    a = np.asarray(adjacency)
    n = a.shape[0]
    free = n * (n - 1) - int(a.sum())
    if count and free <= 0:
        raise ValueError("graph has no non-edges to sample")
    out = np.empty((0, 2), dtype=np.int64)
    while len(out) < count:
        need = count - len(out)
        u = rng.integers(0, n, size=2 * need + 8)
        v = rng.integers(0, n, size=2 * need + 8)
        ok = (u != v) & (a[u, v] == 0)
        out = np.vstack([out, np.stack([u[ok], v[ok]], axis=1)])
    return out[:count]


def split_edges(g: DirectedGraph, train_ratio: float = 0.9, seed: int = 0) -> EdgeSplit:
    rng = np.random.default_rng(seed)
    edges = g.edges()
    perm = rng.permutation(len(edges))
    n_train = int(round(train_ratio * len(edges)))
    train, test = edges[np.sort(perm[:n_train])], edges[np.sort(perm[n_train:])]
    return EdgeSplit(train, test,
                     sample_non_edges(g.adjacency, len(train), rng),
                     sample_non_edges(g.adjacency, len(test), rng))


class LinkPredictor:
    """Two propagation layers (hidden1, hidden2) and a two-layer MLP decoder.

    ``h = relu(P relu(P X W1) W2)`` with ``P = rownorm(A + I)``; the edge score
    is ``sigmoid(relu((h_u * h_v) M1 + b1) M2 + b2)``. The Hadamard combination
    makes the score symmetric in its two endpoints.
    """

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig | None = None,
                 feature_mean=None, feature_std=None):
        self.params = {k: Tensor(params[k]) for k in PARAM_NAMES}
        self.config = config or TrainConfig()
        k = self.params["W1"].rows
        self.feature_mean = np.zeros((1, k)) if feature_mean is None else np.asarray(feature_mean, dtype=np.float64).reshape(1, k)
        self.feature_std = np.ones((1, k)) if feature_std is None else np.asarray(feature_std, dtype=np.float64).reshape(1, k)

    def fit_standardizer(self, x: np.ndarray) -> None:
        """Freeze per-column input standardization from the training graph's features."""
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0, keepdims=True)
        self.feature_mean = x.mean(axis=0, keepdims=True)
        self.feature_std = np.where(std > 1e-12, std, 1.0)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.feature_mean) / self.feature_std

    @classmethod
    def init(cls, n_features: int, config: TrainConfig | None = None, seed: int | None = None) -> "LinkPredictor":
        config = config or TrainConfig()
        rng = np.random.default_rng(config.seed if seed is None else seed)
        h1, h2, d = config.hidden1, config.hidden2, config.decoder_hidden
        params = {
            "W1": glorot(rng, n_features, h1),
            "W2": glorot(rng, h1, h2),
            "M1": glorot(rng, h2, d),
            "b1": np.zeros((1, d)),
            "M2": glorot(rng, d, 1),
            "b2": np.zeros((1, 1)),
        }
        return cls(params, config)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def tensors(self) -> list[Tensor]:
        return [self.params[k] for k in PARAM_NAMES]

    def copy(self) -> "LinkPredictor":
        return LinkPredictor({k: v.values.copy() for k, v in self.params.items()}, self.config,
                             self.feature_mean.copy(), self.feature_std.copy())

    # -- forward pieces; all accept Tensors so gradients can flow

    @staticmethod
    def propagation(adjacency: Tensor) -> Tensor:
        n = adjacency.rows
        return ad.row_normalize(ad.add(adjacency, Tensor._wrap(np.eye(n))))

    def first_layer(self, prop: Tensor, x: Tensor) -> Tensor:
        return ad.relu(ad.matmul(prop, ad.matmul(x, self["W1"])))

    def second_layer(self, prop: Tensor, h1: Tensor) -> Tensor:
        return ad.relu(ad.matmul(prop, ad.matmul(h1, self["W2"])))

    def encode(self, adjacency, x) -> Tensor:
        """Embeddings for every node. ``x`` holds raw features; standardization
        is applied here so callers never see it."""
        adjacency = adjacency if isinstance(adjacency, Tensor) else Tensor(adjacency)
        x = x if isinstance(x, Tensor) else Tensor(x)
        if adjacency.rows != adjacency.cols or adjacency.rows != x.rows:
            raise ad.DimensionError(f"adjacency {adjacency.shape} vs features {x.shape}")
        if x.cols != self["W1"].rows:
            raise ad.DimensionError(f"features have {x.cols} columns, W1 expects {self['W1'].rows}")
        if x.requires_grad:
            x = ad.mul(ad.add_row(x, Tensor._wrap(-self.feature_mean)),
                       Tensor._wrap(np.broadcast_to(1.0 / self.feature_std, x.shape)))
        else:
            x = Tensor._wrap(self.standardize(x.values))
        prop = self.propagation(adjacency)
        return self.second_layer(prop, self.first_layer(prop, x))

    def decode_logits(self, hu: Tensor, hv: Tensor) -> Tensor:
        z = ad.relu(ad.add_row(ad.matmul(ad.mul(hu, hv), self["M1"]), self["b1"]))
        return ad.add_row(ad.matmul(z, self["M2"]), self["b2"])

    def predict_link(self, hu, hv) -> Tensor:
        hu = hu if isinstance(hu, Tensor) else Tensor(hu)
        hv = hv if isinstance(hv, Tensor) else Tensor(hv)
        return ad.sigmoid(self.decode_logits(hu, hv))

    # -- numpy conveniences (no tape)

    def embed(self, adjacency: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.encode(Tensor(adjacency), Tensor(x)).values

    def score_pairs(self, h: np.ndarray, pairs) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
        if len(pairs) == 0:
            return np.zeros(0)
        hu, hv = Tensor._wrap(h[pairs[:, 0]]), Tensor._wrap(h[pairs[:, 1]])
        return self.predict_link(hu, hv).values[:, 0]

    def score(self, adjacency: np.ndarray, x: np.ndarray, u: int, v: int) -> float:
        h = self.embed(adjacency, x)
        return float(self.score_pairs(h, [(u, v)])[0])

    # -- persistence

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "feature_mean": self.feature_mean.ravel().tolist(),
            "feature_std": self.feature_std.ravel().tolist(),
            "params": {k: {"shape": list(self.params[k].shape),
                           "values": self.params[k].values.ravel().tolist()}
                       for k in PARAM_NAMES},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinkPredictor":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a link predictor checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        params = {k: np.array(v["values"], dtype=np.float64).reshape(v["shape"])
                  for k, v in d["params"].items()}
        return cls(params, TrainConfig(**d["config"]), d.get("feature_mean"), d.get("feature_std"))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "LinkPredictor":
        return cls.from_dict(json.loads(Path(path).read_text()))


def message_adjacency(g: DirectedGraph, split: EdgeSplit, mode: str) -> np.ndarray:
    if mode == "full":
        return np.asarray(g.adjacency)
    if mode == "train":
        a = np.zeros((g.n, g.n))
        if len(split.train):
            a[split.train[:, 0], split.train[:, 1]] = 1.0
        return a
    raise ValueError(f"unknown message_passing mode {mode!r}")


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)


def train(g: DirectedGraph, split: EdgeSplit, config: TrainConfig | None = None,
          model: LinkPredictor | None = None) -> tuple[LinkPredictor, TrainHistory]:
    """Full-batch BCE training with Adam.

    Each epoch scores every training edge against a fresh, equally sized
    uniform sample of non-edges drawn from a seeded stream.
    """
    config = config or TrainConfig()
    if model is None:
        model = LinkPredictor.init(g.n_features, config)
        model.fit_standardizer(g.features)
    history = TrainHistory()
    if config.epochs <= 0:
        return model, history
    rng = np.random.default_rng([config.seed, 1])
    opt = ad.Adam(model.tensors(), lr=config.lr)
    adj = Tensor(message_adjacency(g, split, config.message_passing))
    x = Tensor(g.features)
    pos = np.asarray(split.train, dtype=np.intp)
    targets = np.concatenate([np.ones(len(pos)), np.zeros(len(pos))]).reshape(-1, 1)
    for p in model.tensors():
        p.requires_grad = True
    try:
        for epoch in range(config.epochs):
            neg = sample_non_edges(g.adjacency, len(pos), rng)
            pairs = np.vstack([pos, neg])
            with ad.Tape() as tape:
                h = model.encode(adj, x)
                logits = model.decode_logits(ad.take_rows(h, pairs[:, 0]), ad.take_rows(h, pairs[:, 1]))
                loss = ad.bce_with_logits(logits, targets)
            tape.backward(loss)
            opt.step()
            history.losses.append(loss.item())
            if epoch % 200 == 0:
                log.debug("epoch %d loss %.5f", epoch, history.losses[-1])
    finally:
        # frozen weights keep attack tapes from tracking the victim
        for p in model.tensors():
            p.requires_grad = False
            p.grad = None
    return model, history


def auroc(pos_scores, neg_scores) -> float:
    """Mann-Whitney rank statistic; ties count one half."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("AUROC needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def accuracy(pos_scores, neg_scores, threshold: float = DECISION_THRESHOLD) -> float:
    pos = np.asarray(pos_scores)
    neg = np.asarray(neg_scores)
    total = len(pos) + len(neg)
    if total == 0:
        raise ValueError("accuracy needs at least one score")
    return float(((pos >= threshold).sum() + (neg < threshold).sum()) / total)


def evaluate(model: LinkPredictor, g: DirectedGraph, split: EdgeSplit,
             threshold: float = DECISION_THRESHOLD) -> dict[str, float]:
    if len(split.test) == 0 or len(split.test_negatives) == 0:
        raise ValueError("empty test set")
    h = model.embed(message_adjacency(g, split, model.config.message_passing), g.features)
    pos = model.score_pairs(h, split.test)
    neg = model.score_pairs(h, split.test_negatives)
    return {"accuracy": accuracy(pos, neg, threshold), "auroc": auroc(pos, neg)}
