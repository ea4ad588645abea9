"""Directed graphs, vicious-node augmentation and degree statistics."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FEATURE_MODES = ("existent", "random", "ones", "zeros", "mean", "median")
KL_SMOOTHING = 1e-6


@dataclass(frozen=True)
class DirectedGraph:
    """Dense binary adjacency (``adjacency[i, j] == 1`` iff edge i->j) plus features."""

    adjacency: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.float64)
        x = np.asarray(self.features, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if x.ndim != 2 or x.shape[0] != a.shape[0]:
            raise ValueError(f"features {x.shape} do not match {a.shape[0]} nodes")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a)):
            raise ValueError("self-loops are not allowed")
        a.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "features", x)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> np.ndarray:
        """(m, 2) array of (src, dst) pairs in row-major order."""
        return np.argwhere(self.adjacency > 0)

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adjacency[u, v])

    @classmethod
    def from_edges(cls, n: int, edges, features) -> "DirectedGraph":
        a = np.zeros((n, n))
        for u, v in edges:
            if u != v:
                a[u, v] = 1.0
        return cls(a, features)


@dataclass(frozen=True)
class AugmentedGraph:
    """The base graph padded with isolated vicious nodes ``n .. n+n_vicious-1``."""

    base: DirectedGraph
    n_vicious: int
    adjacency: np.ndarray
    features: np.ndarray
    source: int = 0
    target: int = 1
    extra_controlled: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n = self.base.n
        if not (0 <= self.source < n and 0 <= self.target < n):
            raise ValueError("source and target must be original nodes")
        if self.source == self.target:
            raise ValueError("source and target must differ")
        if self.target in self.extra_controlled:
            raise ValueError("target cannot be controlled by the attacker")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def vicious(self) -> np.ndarray:
        return np.arange(self.base.n, self.n)

    @property
    def controlled(self) -> np.ndarray:
        """Sorted ids of V^s (source plus extra controlled originals) and vicious nodes."""
        orig = sorted({self.source, *self.extra_controlled})
        return np.concatenate([np.array(orig, dtype=np.intp), self.vicious]).astype(np.intp)

    def with_pair(self, source: int, target: int,
                  extra_controlled: tuple[int, ...] = ()) -> "AugmentedGraph":
        return AugmentedGraph(self.base, self.n_vicious, self.adjacency, self.features,
                              source, target, tuple(extra_controlled))

    def as_graph(self) -> DirectedGraph:
        return DirectedGraph(self.adjacency, self.features)


def _vicious_features(x: np.ndarray, n_vicious: int, mode: str,
                      rng: np.random.Generator) -> np.ndarray:
    k = x.shape[1]
    if mode == "existent":
        return x[rng.integers(0, x.shape[0], size=n_vicious)].copy()
    if mode == "random":
        return rng.uniform(0.0, 1.0, size=(n_vicious, k))
    if mode == "ones":
        return np.ones((n_vicious, k))
    if mode == "zeros":
        return np.zeros((n_vicious, k))
    if mode == "mean":
        return np.tile(x.mean(axis=0), (n_vicious, 1))
    if mode == "median":
        return np.tile(np.median(x, axis=0), (n_vicious, 1))
    raise ValueError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")


def augment(g: DirectedGraph, n_vicious: int, feature_mode: str = "existent",
            noise_scale: float = 0.05, seed: int = 0, source: int = 0,
            target: int = 1, extra_controlled=()) -> AugmentedGraph:
    """Append ``n_vicious`` isolated nodes with synthesized features.

    Vicious feature rows are built per ``feature_mode`` and then receive
    uniform noise in ``[0, noise_scale]``.
    """
    if n_vicious < 0:
        raise ValueError("n_vicious must be non-negative")
    rng = np.random.default_rng(seed)
    n = g.n
    vx = _vicious_features(np.asarray(g.features), n_vicious, feature_mode, rng)
    if n_vicious and noise_scale > 0:
        vx = vx + rng.uniform(0.0, noise_scale, size=vx.shape)
    a = np.zeros((n + n_vicious, n + n_vicious))
    a[:n, :n] = g.adjacency
    x = np.vstack([g.features, vx]) if n_vicious else np.array(g.features)
    a.setflags(write=False)
    x.setflags(write=False)
    return AugmentedGraph(g, n_vicious, a, x, source, target, tuple(extra_controlled))


def out_neighbors(adjacency: np.ndarray, u: int) -> np.ndarray:
    return np.flatnonzero(adjacency[u])


def l_hop_neighborhood(g, u: int, l: int) -> set[int]:
    """Nodes reachable from ``u`` along out-edges in at most ``l`` hops.

    ``u`` itself is included only when a cycle leads back to it. Accepts a
    graph object or a raw adjacency matrix.
    """
    a = g.adjacency if hasattr(g, "adjacency") else np.asarray(g)
    n = a.shape[0]
    if not 0 <= u < n:
        raise ValueError(f"node {u} not in graph of {n} nodes")
    if l < 1:
        raise ValueError("l must be >= 1")
    found: set[int] = set()
    frontier = deque([(u, 0)])
    depth_seen = {u: 0}
    while frontier:
        node, d = frontier.popleft()
        if d == l:
            continue
        for v in out_neighbors(a, node):
            v = int(v)
            found.add(v)
            if v not in depth_seen:
                depth_seen[v] = d + 1
                frontier.append((v, d + 1))
    return found


def total_degrees(adjacency: np.ndarray) -> np.ndarray:
    a = np.asarray(adjacency)
    return (a.sum(axis=0) + a.sum(axis=1)).astype(np.int64)


def degree_distribution(degrees, support=None, eps: float = KL_SMOOTHING) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed probability vector over ``support`` (default: observed degrees).

    Returns ``(support, probabilities)``.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    if support is None:
        support = np.unique(degrees)
    support = np.asarray(support, dtype=np.int64)
    counts = np.array([(degrees == d).sum() for d in support], dtype=np.float64)
    p = counts / max(len(degrees), 1)
    p = p + eps
    return support, p / p.sum()


def kl_shift(before: DirectedGraph, after_adjacency, active_vicious=None) -> float:
    """KL(before || after) between smoothed total-degree histograms.

    ``after_adjacency`` may have extra (vicious) nodes. Vicious nodes not listed
    in ``active_vicious`` are dropped from the after histogram; by default a
    vicious node is active when it has any incident edge.
    """
    a0 = np.asarray(before.adjacency)
    a1 = np.asarray(after_adjacency)
    n = a0.shape[0]
    if a1.shape[0] < n:
        raise ValueError("after graph has fewer nodes than before")
    d0 = total_degrees(a0)
    d1_all = total_degrees(a1)
    if active_vicious is None:
        keep_v = [v for v in range(n, a1.shape[0]) if d1_all[v] > 0]
    else:
        keep_v = sorted(int(v) for v in active_vicious)
    d1 = np.concatenate([d1_all[:n], d1_all[keep_v]]) if keep_v else d1_all[:n]
    support = np.union1d(np.unique(d0), np.unique(d1))
    _, p = degree_distribution(d0, support)
    _, q = degree_distribution(d1, support)
    return float(max(np.sum(p * np.log(p / q)), 0.0))


# ---------------------------------------------------------------- file formats


def read_edge_list(path) -> list[tuple[int, int]]:
    """Parse ``src<TAB>dst`` lines; ``#`` starts a comment, blank lines skipped."""
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
    return edges


def write_edge_list(path, g: DirectedGraph) -> None:
    with open(path, "w") as fh:
        fh.write(f"# directed edge list, {g.n} nodes, {g.n_edges} edges\n")
        for u, v in g.edges():
            fh.write(f"{u}\t{v}\n")


def read_features(path) -> np.ndarray:
    """CSV features, one row per node; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    return np.array([[float(c) for c in r] for r in rows], dtype=np.float64)


def write_features(path, x: np.ndarray, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"f{i}" for i in range(x.shape[1])])
        for row in np.asarray(x):
            w.writerow([repr(float(v)) for v in row])


def load_graph(edge_path, feature_path, n: int | None = None) -> DirectedGraph:
    edges = read_edge_list(edge_path)
    x = read_features(feature_path)
    if n is None:
        n = x.shape[0]
    if edges and max(max(e) for e in edges) >= n:
        raise ValueError("edge list references a node without a feature row")
    return DirectedGraph.from_edges(n, edges, x)


def save_graph(g: DirectedGraph, edge_path, feature_path) -> None:
    Path(edge_path).parent.mkdir(parents=True, exist_ok=True)
    write_edge_list(edge_path, g)
    write_features(feature_path, g.features)
