"""Independent reference implementations used by the test-suite.

Nothing here imports the package under test except for types; every oracle
recomputes its quantity from first principles (loops, enumeration, dense
linear algebra).
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at ``x`` (copied, not mutated)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor: float = 1e-8) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def random_digraph(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    a = (rng.random((n, n)) < p).astype(np.float64)
    np.fill_diagonal(a, 0.0)
    return a


# ---------------------------------------------------------------- AUROC


def auroc_pairs(pos, neg) -> float:
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


# ---------------------------------------------------------------- forward pass


def gcn_forward_loops(a, x, w1, w2):
    """Two propagation layers with explicit loops over nodes and neighbors."""
    n = len(a)

    def prop(m):
        out = np.zeros_like(m)
        for i in range(n):
            nbrs = [i] + [j for j in range(n) if a[i][j]]
            weight = 1.0 / len(nbrs)
            for j in nbrs:
                out[i] += weight * m[j]
        return out

    h1 = np.maximum(prop(x @ w1), 0.0)
    return np.maximum(prop(h1 @ w2), 0.0)


# ---------------------------------------------------------------- graphs


def bfs_layers(a, u, l):
    reach = set()
    frontier = {u}
    for _ in range(l):
        nxt = set()
        for w in frontier:
            for v in range(len(a)):
                if a[w][v]:
                    nxt.add(v)
        reach |= nxt
        frontier = nxt
    return reach


def kl_by_hand(deg_before, deg_after, eps=1e-6):
    support = sorted(set(deg_before) | set(deg_after))

    def dist(d):
        p = [d.count(k) / len(d) + eps for k in support]
        s = sum(p)
        return [v / s for v in p]

    p, q = dist(list(deg_before)), dist(list(deg_after))
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))


# ---------------------------------------------------------------- heuristics


def nbrs(a, u):
    n = len(a)
    return {w for w in range(n) if a[u][w] or a[w][u]}


def cn(a, u, v):
    return float(len(nbrs(a, u) & nbrs(a, v)))


def jac(a, u, v):
    U = nbrs(a, u) | nbrs(a, v)
    return len(nbrs(a, u) & nbrs(a, v)) / len(U) if U else 0.0


def pa(a, u, v):
    n = len(a)
    deg = [sum(a[w][j] for j in range(n)) + sum(a[j][w] for j in range(n)) for w in range(n)]
    return float(deg[u] * deg[v])


def aa(a, u, v):
    s = 0.0
    for w in sorted(nbrs(a, u) & nbrs(a, v)):
        k = len(nbrs(a, w))
        if k > 1:
            s += 1.0 / math.log(k)
    return s


def ra(a, u, v):
    return sum(1.0 / len(nbrs(a, w)) for w in sorted(nbrs(a, u) & nbrs(a, v)))


def count_walks(a, u, v, length):
    """Number of directed walks of exactly ``length`` edges by enumeration."""
    n = len(a)
    if length == 1:
        return int(a[u][v])
    total = 0
    for mids in itertools.product(range(n), repeat=length - 1):
        path = (u, *mids, v)
        if all(a[path[i]][path[i + 1]] for i in range(length)):
            total += 1
    return total


def count_walks_dp(a, u, v, length):
    """Walk counts by dynamic programming over integer lists."""
    n = len(a)
    cur = [0] * n
    cur[u] = 1
    for _ in range(length):
        nxt = [0] * n
        for i in range(n):
            if cur[i]:
                for j in range(n):
                    if a[i][j]:
                        nxt[j] += cur[i]
        cur = nxt
    return cur[v]


def katz_oracle(a, u, v, beta=0.05, max_len=5, enumerate_paths=False):
    walks = count_walks if enumerate_paths else count_walks_dp
    return sum(beta ** l * walks(a, u, v, l) for l in range(1, max_len + 1))


def pagerank_exact(a, u, damping=0.85):
    """Personalized PageRank by a direct linear solve (dangling mass restarts at u)."""
    a = np.asarray(a, dtype=np.float64)
    n = len(a)
    out = a.sum(axis=1)
    M = np.zeros((n, n))
    for i in range(n):
        if out[i] > 0:
            M[i] = a[i] / out[i]
        else:
            M[i, u] = 1.0
    e = np.zeros(n)
    e[u] = 1.0
    # pi = d * pi M + (1-d) e  ->  pi (I - d M) = (1-d) e
    return np.linalg.solve((np.eye(n) - damping * M).T, (1 - damping) * e)


def simrank_loops(a, decay=0.8, iterations=10):
    n = len(a)
    ins = [[j for j in range(n) if a[j][i]] for i in range(n)]
    s = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for _ in range(iterations):
        new = [[0.0] * n for _ in range(n)]
        for x in range(n):
            for y in range(n):
                if x == y:
                    new[x][y] = 1.0
                elif ins[x] and ins[y]:
                    tot = sum(s[i][j] for i in ins[x] for j in ins[y])
                    new[x][y] = decay * tot / (len(ins[x]) * len(ins[y]))
        s = new
    return np.array(s)
