"""Comparison attackers: random vicious-node activation and a greedy gradient attack.

Both produce a discrete perturbation on the same feasible slots as the
optimized attack and are scored through :meth:`AttackProblem.result`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attack import AttackProblem, AttackResult
from .autodiff import Tensor
from .graph import AugmentedGraph
from .model import DECISION_THRESHOLD, LinkPredictor

RAND_MAX_TOGGLES = 20


@dataclass
class BaselineConfig:
    kind: str = "rand"
    p: float = 0.25
    budget: int = 50
    max_flips: int = 50
    seed: int = 0
    success_threshold: float = DECISION_THRESHOLD

    def __post_init__(self):
        if self.kind not in ("rand", "aiga"):
            raise ValueError(f"kind must be 'rand' or 'aiga', got {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.budget < 0 or self.max_flips < 0:
            raise ValueError("budget and max_flips must be non-negative")


def rand_toggles(p: float) -> int:
    """Slots toggled per activated node."""
    return min(math.ceil(p * RAND_MAX_TOGGLES), RAND_MAX_TOGGLES)


def rand_attack(g: AugmentedGraph, model: LinkPredictor, config: BaselineConfig,
                problem: AttackProblem | None = None, method: str = "rand") -> AttackResult:
    """Activate each vicious node with probability ``p``; every activated node
    and every controlled original toggles ``rand_toggles(p)`` random feasible
    slots. Edges may only point at original or activated vicious nodes."""
    problem = problem or AttackProblem(g, model)
    rng = np.random.default_rng(config.seed)
    vic = g.vicious
    activated = vic[rng.random(len(vic)) < config.p]
    n0 = g.base.n
    allowed_cols = np.zeros(g.n, dtype=bool)
    allowed_cols[:n0] = True
    allowed_cols[activated] = True
    k = rand_toggles(config.p)

    P = np.zeros((g.n, g.n))
    originals = [int(u) for u in g.controlled if u < n0]
    for row in originals + [int(v) for v in activated]:
        slots = np.flatnonzero((problem.mask[row] > 0) & allowed_cols)
        if k == 0 or len(slots) == 0:
            continue
        chosen = rng.choice(slots, size=min(k, len(slots)), replace=False)
        P[row, chosen] = np.where(problem.a_prime[row, chosen] > 0, -1.0, 1.0)
    return problem.result(P, method, config.success_threshold)


def _adv_gradient(problem: AttackProblem, adj_rows: np.ndarray) -> tuple[np.ndarray, float]:
    """Gradient of ``-log f`` with respect to the controlled adjacency rows."""
    x = Tensor(adj_rows, requires_grad=True)
    with ad.Tape() as tape:
        loss, f = problem.adversarial_loss(x)
    tape.backward(loss)
    return x.grad, f.item()


def _prob_rows(problem: AttackProblem, adj_rows: np.ndarray) -> float:
    return problem.adversarial_loss(Tensor._wrap(adj_rows))[1].item()


def aiga_attack(g: AugmentedGraph, model: LinkPredictor, config: BaselineConfig,
                problem: AttackProblem | None = None, method: str = "aiga") -> AttackResult:
    """Greedy single-slot flips ranked by the gradient of ``-log f``.

    Each step flips the untried slot with the largest beneficial gradient
    (a negative gradient on an absent edge favors adding it, a positive one on
    a present edge favors removing it). A flip that lowers ``f`` is undone and
    never retried. Stops after ``max_flips`` steps, on success, or when no
    beneficial slot remains. The first ``budget`` vicious nodes are available
    and all of them are charged.
    """
    problem = problem or AttackProblem(g, model)
    if config.budget > g.n_vicious:
        raise ValueError(f"budget {config.budget} exceeds {g.n_vicious} vicious nodes")
    n0 = g.base.n
    allowed = np.zeros(g.n, dtype=bool)
    allowed[: n0 + config.budget] = True
    rows = problem.rows
    row_ok = np.isin(rows, np.flatnonzero(allowed))
    open_slots = (problem.mask[rows] > 0) & allowed[None, :] & row_ok[:, None]

    cur = problem.a_prime[rows].copy()
    f_cur = _prob_rows(problem, cur)
    steps = 0
    while steps < config.max_flips and f_cur < config.success_threshold:
        grad, _ = _adv_gradient(problem, cur)
        gain = np.where(cur > 0, grad, -grad)
        gain[~open_slots] = -np.inf
        idx = int(np.argmax(gain))
        if not gain.flat[idx] > 0:
            break
        i, j = np.unravel_index(idx, gain.shape)
        steps += 1
        open_slots[i, j] = False
        cur[i, j] = 1.0 - cur[i, j]
        f_new = _prob_rows(problem, cur)
        if f_new < f_cur:
            cur[i, j] = 1.0 - cur[i, j]
        else:
            f_cur = f_new

    P = np.zeros((g.n, g.n))
    P[rows] = cur - problem.a_prime[rows]
    return problem.result(P, method, config.success_threshold, iterations=steps,
                          n_active=config.budget)
