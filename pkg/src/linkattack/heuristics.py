"""Classical link-prediction heuristics on directed graphs, and lift scores.

Neighborhood measures (common neighbors, Jaccard, Adamic-Adar, resource
allocation) treat ``N(u)`` as the union of in- and out-neighbors; preferential
attachment multiplies total degrees. Katz, PageRank and SimRank follow edge
direction.

All scorers take a graph object or a raw adjacency matrix plus a node pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HEURISTICS = ("common_neighbors", "jaccard", "preferential_attachment", "adamic_adar",
              "resource_allocation", "katz", "pagerank", "simrank")

DEFAULTS = {
    "katz": {"beta": 0.05, "max_len": 5},
    "pagerank": {"damping": 0.85, "tol": 1e-12, "max_iter": 10_000},
    "simrank": {"decay": 0.8, "iterations": 10},
}

LIFT_EPS = 1e-9
LIFT_CAP = 1e6


class UnknownHeuristic(KeyError):
    pass


def _adj(g) -> np.ndarray:
    a = g.adjacency if hasattr(g, "adjacency") else g
    return np.asarray(a, dtype=np.float64)


def _check(a: np.ndarray, *nodes: int) -> None:
    for u in nodes:
        if not 0 <= u < a.shape[0]:
            raise ValueError(f"node {u} not in graph of {a.shape[0]} nodes")


def neighbor_set(a: np.ndarray, u: int) -> set[int]:
    """In- and out-neighbors of ``u``."""
    return set(np.flatnonzero(a[u]).tolist()) | set(np.flatnonzero(a[:, u]).tolist())


def common_neighbors(g, u: int, v: int) -> float:
    a = _adj(g)
    _check(a, u, v)
    return float(len(neighbor_set(a, u) & neighbor_set(a, v)))


def jaccard(g, u: int, v: int) -> float:
    a = _adj(g)
    _check(a, u, v)
    nu, nv = neighbor_set(a, u), neighbor_set(a, v)
    union = nu | nv
    return len(nu & nv) / len(union) if union else 0.0


def preferential_attachment(g, u: int, v: int) -> float:
    a = _adj(g)
    _check(a, u, v)
    deg = a.sum(axis=0) + a.sum(axis=1)
    return float(deg[u] * deg[v])


def adamic_adar(g, u: int, v: int) -> float:
    # a shared neighbor with |N(w)| == 1 only arises for u == v; log(1) = 0, so skip it
    a = _adj(g)
    _check(a, u, v)
    total = 0.0
    for w in sorted(neighbor_set(a, u) & neighbor_set(a, v)):
        k = len(neighbor_set(a, w))
        if k > 1:
            total += 1.0 / math.log(k)
    return total


def resource_allocation(g, u: int, v: int) -> float:
    a = _adj(g)
    _check(a, u, v)
    return float(sum(1.0 / len(neighbor_set(a, w))
                     for w in sorted(neighbor_set(a, u) & neighbor_set(a, v))))


def katz(g, u: int, v: int, beta: float = 0.05, max_len: int = 5) -> float:
    """``sum_{l=1..max_len} beta^l * (#walks u -> v of length l)``."""
    a = _adj(g)
    _check(a, u, v)
    row = np.zeros(a.shape[0])
    row[u] = 1.0
    total = 0.0
    for l in range(1, max_len + 1):
        row = row @ a
        total += beta ** l * row[v]
    return float(total)


def pagerank_vector(g, u: int, damping: float = 0.85, tol: float = 1e-12,
                    max_iter: int = 10_000) -> np.ndarray:
    """Stationary distribution of a walk that restarts at ``u`` with probability
    ``1 - damping``. Dangling nodes restart at ``u``."""
    a = _adj(g)
    _check(a, u)
    n = a.shape[0]
    out = a.sum(axis=1)
    trans = np.divide(a, out[:, None], out=np.zeros_like(a), where=out[:, None] > 0)
    dangling = out == 0
    e = np.zeros(n)
    e[u] = 1.0
    pi = e.copy()
    for _ in range(max_iter):
        nxt = damping * (pi @ trans) + (damping * pi[dangling].sum() + 1.0 - damping) * e
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    return pi


def pagerank(g, u: int, v: int, damping: float = 0.85, tol: float = 1e-12,
             max_iter: int = 10_000) -> float:
    a = _adj(g)
    _check(a, u, v)
    return float(pagerank_vector(a, u, damping, tol, max_iter)[v])


def simrank_matrix(g, decay: float = 0.8, iterations: int = 10) -> np.ndarray:
    """SimRank on in-neighbors, iterated ``iterations`` times from the identity."""
    a = _adj(g)
    n = a.shape[0]
    indeg = a.sum(axis=0)
    w = np.divide(a, indeg[None, :], out=np.zeros_like(a), where=indeg[None, :] > 0)
    s = np.eye(n)
    for _ in range(iterations):
        s = decay * (w.T @ s @ w)
        np.fill_diagonal(s, 1.0)
    return s


def simrank(g, u: int, v: int, decay: float = 0.8, iterations: int = 10) -> float:
    a = _adj(g)
    _check(a, u, v)
    return float(simrank_matrix(a, decay, iterations)[u, v])


_SCORERS = {
    "common_neighbors": common_neighbors,
    "jaccard": jaccard,
    "preferential_attachment": preferential_attachment,
    "adamic_adar": adamic_adar,
    "resource_allocation": resource_allocation,
    "katz": katz,
    "pagerank": pagerank,
    "simrank": simrank,
}


def score(name: str, g, u: int, v: int, **params) -> float:
    """Heuristic ``name`` for the ordered pair ``(u, v)``."""
    try:
        fn = _SCORERS[name]
    except KeyError:
        raise UnknownHeuristic(f"unknown heuristic {name!r}; expected one of {HEURISTICS}") from None
    kw = dict(DEFAULTS.get(name, {}))
    kw.update(params)
    return fn(g, u, v, **kw)


@dataclass(frozen=True)
class Lift:
    before: float
    after: float
    value: float
    capped: bool


def lift_detail(name: str, g_before, g_after, u: int, v: int, **params) -> Lift:
    """``after / max(before, eps)``, capped at :data:`LIFT_CAP`.

    A pair scoring 0 both before and after has lift 1 (nothing changed).
    """
    before = score(name, g_before, u, v, **params)
    after = score(name, g_after, u, v, **params)
    if before <= LIFT_EPS and after <= LIFT_EPS:
        return Lift(before, after, 1.0, False)
    raw = after / max(before, LIFT_EPS)
    return Lift(before, after, min(raw, LIFT_CAP), raw > LIFT_CAP)


def lift(name: str, g_before, g_after, u: int, v: int, **params) -> float:
    return lift_detail(name, g_before, g_after, u, v, **params).value
