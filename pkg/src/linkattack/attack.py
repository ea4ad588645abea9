"""Sparse vicious-node attack on a link predictor.

The attacker owns the out-edge slots of its controlled nodes (the source,
any extra controlled originals, and every injected vicious node). A relaxed
perturbation ``tanh(logits)`` in (-1, 1) is optimized with Adam against

    -log f(h_t, h_s)  +  beta * |A_C - A~_C|_1  +  gamma * |v_new|_1

then thresholded to {-1, 0, +1} and applied with a [0, 1] clamp.

Only the source embedding moves during the attack, so the loss is evaluated
on the controlled rows alone: first-layer activations of uncontrolled nodes
are cached once, which keeps each step O(|C| n) instead of O(n^2).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import AugmentedGraph, kl_shift, l_hop_neighborhood
from .model import LinkPredictor

log = logging.getLogger(__name__)

INIT_MODES = ("random", "zeros_eps", "ones_eps", "neg_ones_eps")
PROB_FLOOR = 1e-12
_TANH_LIMIT = 1.0 - 1e-9


@dataclass
class AttackConfig:
    beta: float = 0.1
    gamma: float = 0.1
    t_plus: float = 0.5
    t_minus: float = -0.5
    init_mode: str = "random"
    eps_init: float = 0.1
    lr: float = 0.1
    max_iters: int = 500
    success_threshold: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if not self.t_minus < 0 < self.t_plus:
            raise ValueError("thresholds must satisfy t_minus < 0 < t_plus")
        if not 0 < self.success_threshold < 1:
            raise ValueError("success_threshold must lie in (0, 1)")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if not 0 <= self.eps_init < 0.3:
            raise ValueError("eps_init must lie in [0, 0.3)")
        if self.lr <= 0 or self.max_iters < 0:
            raise ValueError("lr must be positive and max_iters non-negative")


@dataclass
class AttackResult:
    method: str
    source: int
    target: int
    success: bool
    pre_prob: float
    post_prob: float
    n_active_vicious: int
    edges_added: int
    edges_removed: int
    kl_shift: float
    iterations_used: int
    loss_trace: list[float] = field(default_factory=list)
    added: list[tuple[int, int]] = field(default_factory=list)
    removed: list[tuple[int, int]] = field(default_factory=list)
    discrete_P: np.ndarray | None = field(default=None, repr=False)
    attacked_adjacency: np.ndarray | None = field(default=None, repr=False)

    def to_record(self, **extra) -> dict:
        """JSON-ready dict. Dense matrices are replaced by the edge lists
        they are fully determined by (given the augmented graph)."""
        d = asdict(self)
        d.pop("discrete_P")
        d.pop("attacked_adjacency")
        d["added"] = [list(map(int, e)) for e in self.added]
        d["removed"] = [list(map(int, e)) for e in self.removed]
        d.update(extra)
        return d


def feasibility_mask(g: AugmentedGraph, hops: int = 2) -> np.ndarray:
    """Slots the attacker may flip.

    Rows are the controlled nodes; columns any node except the row itself and
    the target. Rows of controlled nodes inside ``{t} | N^{hops-1}(t)`` are
    frozen, since the target embedding reads them, and freezing them keeps the
    source out of the target's ``hops``-hop neighborhood.
    """
    n = g.n
    mask = np.zeros((n, n))
    mask[g.controlled, :] = 1.0
    np.fill_diagonal(mask, 0.0)
    mask[:, g.target] = 0.0
    reads_t = {g.target}
    if hops > 1:
        reads_t |= l_hop_neighborhood(g.adjacency, g.target, hops - 1)
    for v in reads_t:
        mask[v, :] = 0.0
    return mask


@dataclass
class PerturbationState:
    logits: Tensor
    mask: np.ndarray

    @property
    def relaxed(self) -> np.ndarray:
        """``P_hat = mask * tanh(logits)``."""
        return self.mask * np.tanh(self.logits.values)


def _atanh(p: np.ndarray) -> np.ndarray:
    return np.arctanh(np.clip(p, -_TANH_LIMIT, _TANH_LIMIT))


def init_state(g: AugmentedGraph, config: AttackConfig, mask: np.ndarray | None = None) -> PerturbationState:
    mask = feasibility_mask(g) if mask is None else mask
    rng = np.random.default_rng(config.seed)
    eps = rng.uniform(0.0, config.eps_init, size=mask.shape) if config.eps_init > 0 else np.zeros(mask.shape)
    if config.init_mode == "random":
        p = rng.uniform(-config.eps_init, config.eps_init, size=mask.shape) if config.eps_init > 0 else eps
    elif config.init_mode == "zeros_eps":
        p = eps
    elif config.init_mode == "ones_eps":
        p = 1.0 - eps
    else:
        p = -1.0 + eps
    return PerturbationState(Tensor(_atanh(p) * mask, requires_grad=True), mask)


def init_from(external_P: np.ndarray, g: AugmentedGraph, noise: float = 1e-3, seed: int = 0,
              mask: np.ndarray | None = None) -> PerturbationState:
    """Warm start whose discretization reproduces ``external_P``.

    Entries are set to ``0.9 * P`` plus uniform noise in ``[0, noise)``.
    """
    mask = feasibility_mask(g) if mask is None else mask
    P = np.asarray(external_P, dtype=np.float64)
    if P.shape != mask.shape:
        raise ValueError(f"perturbation shape {P.shape} does not match graph {mask.shape}")
    if not np.all(np.isin(P, (-1.0, 0.0, 1.0))):
        raise ValueError("perturbation entries must be -1, 0 or +1")
    if np.any((P != 0) & (mask == 0)):
        raise ValueError("perturbation touches infeasible slots")
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(0.0, noise, size=P.shape) if noise > 0 else 0.0
    return PerturbationState(Tensor(_atanh(0.9 * P + jitter) * mask, requires_grad=True), mask)


def relaxed_adjacency(state: PerturbationState, a_prime) -> Tensor:
    """``clamp01(A' + mask * tanh(logits))`` as a differentiable tensor."""
    a_prime = a_prime if isinstance(a_prime, Tensor) else Tensor._wrap(np.asarray(a_prime, dtype=np.float64))
    phat = ad.mul(ad.tanh(state.logits), Tensor._wrap(state.mask))
    return ad.clamp01(ad.add(a_prime, phat))


def discretize(state: PerturbationState, config: AttackConfig) -> np.ndarray:
    phat = state.relaxed
    P = np.zeros_like(phat)
    P[phat >= config.t_plus] = 1.0
    P[phat <= config.t_minus] = -1.0
    P[state.mask == 0] = 0.0
    return P


def apply_perturbation(P: np.ndarray, a_prime: np.ndarray) -> np.ndarray:
    """``clamp01(P + A')``: redundant additions and vacuous removals are absorbed."""
    P, a_prime = np.asarray(P), np.asarray(a_prime)
    if P.shape != a_prime.shape:
        raise ValueError(f"shape mismatch {P.shape} vs {a_prime.shape}")
    return np.clip(P + a_prime, 0.0, 1.0)


def active_vicious(P: np.ndarray, g: AugmentedGraph) -> np.ndarray:
    """Vicious nodes touched by at least one added edge (as row or column)."""
    v = g.vicious
    if len(v) == 0:
        return v
    adds = np.asarray(P) > 0
    hit = adds[v, :].any(axis=1) | adds[:, v].any(axis=0)
    return v[hit]


@dataclass
class LossTerms:
    total: Tensor
    adv: float
    dist: float
    new: float
    prob: float


class AttackProblem:
    """Cached quantities for attacking one (source, target) pair on one model."""

    def __init__(self, g: AugmentedGraph, model: LinkPredictor, mask: np.ndarray | None = None):
        self.g = g
        self.model = model
        self.mask = feasibility_mask(g) if mask is None else mask
        n = g.n
        a = np.asarray(g.adjacency, dtype=np.float64)
        self.a_prime = a
        self.rows = np.array(sorted(set(np.flatnonzero(self.mask.any(axis=1))) | {g.source}), dtype=np.intp)
        self.others = np.setdiff1d(np.arange(n), self.rows)
        self.src_pos = int(np.searchsorted(self.rows, g.source))

        xs = model.standardize(g.features)
        self.xw1 = xs @ model["W1"].values
        prop = a + np.eye(n)
        prop /= prop.sum(axis=1, keepdims=True)
        h1 = np.maximum(prop @ self.xw1, 0.0)
        self.h1w2_others = Tensor._wrap(h1[self.others] @ model["W2"].values)
        h = np.maximum(prop @ (h1 @ model["W2"].values), 0.0)
        self.h_clean = h
        self.h_t = Tensor._wrap(h[[g.target]])
        self.pre_prob = float(model.score_pairs(h, [(g.target, g.source)])[0])

        self.a_rows = Tensor._wrap(a[self.rows])
        self.mask_rows = Tensor._wrap(self.mask[self.rows])
        eye_rows = np.zeros((len(self.rows), n))
        eye_rows[np.arange(len(self.rows)), self.rows] = 1.0
        self.eye_rows = Tensor._wrap(eye_rows)
        self._xw1 = Tensor._wrap(self.xw1)
        vic = g.vicious
        self.vicious = vic
        self.vicious_pos = np.searchsorted(self.rows, vic) if len(vic) else vic
        if len(vic) and not np.array_equal(self.rows[self.vicious_pos], vic):
            raise AssertionError("vicious nodes must be controlled rows")

    # -- differentiable pieces

    def source_embedding(self, adj_rows: Tensor) -> Tensor:
        """Embedding of the source given the (relaxed) adjacency rows of ``self.rows``."""
        model = self.model
        prop_rows = ad.row_normalize(ad.add(adj_rows, self.eye_rows))
        h1_rows = ad.relu(ad.matmul(prop_rows, self._xw1))
        h1w2_rows = ad.matmul(h1_rows, model["W2"])
        prop_s = ad.take_rows(prop_rows, [self.src_pos])
        pre = ad.matmul(ad.take_cols(prop_s, self.rows), h1w2_rows)
        if len(self.others):
            pre = ad.add(pre, ad.matmul(ad.take_cols(prop_s, self.others), self.h1w2_others))
        return ad.relu(pre)

    def adversarial_loss(self, adj_rows: Tensor) -> tuple[Tensor, Tensor]:
        """``(-log f(h_t, h_s), f)``."""
        f = self.model.predict_link(self.h_t, self.source_embedding(adj_rows))
        return ad.scale(ad.log(f, floor=PROB_FLOOR), -1.0), f

    def relaxed_rows(self, logit_rows: Tensor) -> tuple[Tensor, Tensor]:
        """``(clamp01(A'_C + mask_C * tanh(logits_C)), mask_C * tanh(logits_C))``."""
        phat = ad.mul(ad.tanh(logit_rows), self.mask_rows)
        return ad.clamp01(ad.add(self.a_rows, phat)), phat

    def soft_activation(self, phat_rows: Tensor) -> Tensor | None:
        """Per vicious node, the strongest pending addition on any incident slot."""
        if len(self.vicious) == 0:
            return None
        pos = ad.relu(phat_rows)
        out_part = ad.transpose(ad.max_rows(ad.take_rows(pos, self.vicious_pos)))
        in_part = ad.max_cols(ad.take_cols(pos, self.vicious))
        return ad.maximum(out_part, in_part)

    def loss(self, logits: Tensor, config: AttackConfig) -> LossTerms:
        """Instance loss from the full n' x n' logits."""
        return self.loss_rows(ad.take_rows(logits, self.rows), config)

    def loss_rows(self, logit_rows: Tensor, config: AttackConfig) -> LossTerms:
        """Instance loss from the controlled-row block of the logits."""
        rows, phat = self.relaxed_rows(logit_rows)
        adv, f = self.adversarial_loss(rows)
        total = adv
        dist = new = 0.0
        if config.beta:
            d = ad.l1_norm(ad.sub(self.a_rows, rows))
            dist = d.item()
            total = ad.add(total, ad.scale(d, config.beta))
        if config.gamma:
            v = self.soft_activation(phat)
            if v is not None:
                nv = ad.l1_norm(v)
                new = nv.item()
                total = ad.add(total, ad.scale(nv, config.gamma))
        return LossTerms(total, adv.item(), dist, new, f.item())

    # -- discrete evaluation

    def attacked_adjacency(self, P: np.ndarray) -> np.ndarray:
        return apply_perturbation(P, self.a_prime)

    def prob_on(self, adjacency: np.ndarray) -> float:
        """Score f(h_t, h_s) with ``h_t`` from the clean graph and ``h_s`` from ``adjacency``."""
        h = self.model.embed(adjacency, self.g.features)
        return float(self.model.score_pairs(np.vstack([self.h_clean[self.g.target], h[self.g.source]]),
                                            [(0, 1)])[0])

    def result(self, P: np.ndarray, method: str, config_threshold: float,
               iterations: int = 0, trace=None, n_active: int | None = None,
               active: np.ndarray | None = None) -> AttackResult:
        g = self.g
        a_tilde = self.attacked_adjacency(P)
        post = self.prob_on(a_tilde)
        act = active_vicious(P, g) if active is None else active
        added = np.argwhere((a_tilde > 0) & (self.a_prime == 0))
        removed = np.argwhere((a_tilde == 0) & (self.a_prime > 0))
        return AttackResult(
            method=method, source=g.source, target=g.target,
            success=bool(post >= config_threshold),
            pre_prob=self.pre_prob, post_prob=post,
            n_active_vicious=int(len(act) if n_active is None else n_active),
            edges_added=int(len(added)), edges_removed=int(len(removed)),
            kl_shift=kl_shift(g.base, a_tilde, act),
            iterations_used=iterations, loss_trace=list(trace or []),
            added=[tuple(map(int, e)) for e in added],
            removed=[tuple(map(int, e)) for e in removed],
            discrete_P=P, attacked_adjacency=a_tilde,
        )


def attack_loss(state: PerturbationState, model: LinkPredictor, g: AugmentedGraph,
                config: AttackConfig, problem: AttackProblem | None = None) -> LossTerms:
    """Instance loss on the relaxed perturbation (differentiable in ``state.logits``)."""
    problem = problem or AttackProblem(g, model, state.mask)
    return problem.loss(state.logits, config)


def dense_attack_loss(state: PerturbationState, model: LinkPredictor, g: AugmentedGraph,
                      config: AttackConfig) -> Tensor:
    """The same loss through a full encode of the relaxed graph (slow; reference path)."""
    a_rel = relaxed_adjacency(state, g.adjacency)
    h = model.encode(a_rel, Tensor._wrap(np.asarray(g.features)))
    h_clean = model.embed(g.adjacency, g.features)
    f = model.predict_link(Tensor._wrap(h_clean[[g.target]]), ad.take_rows(h, [g.source]))
    total = ad.scale(ad.log(f, floor=PROB_FLOOR), -1.0)
    rows = g.controlled
    a_rows = Tensor._wrap(np.asarray(g.adjacency)[rows])
    if config.beta:
        total = ad.add(total, ad.scale(ad.l1_norm(ad.sub(a_rows, ad.take_rows(a_rel, rows))), config.beta))
    if config.gamma and g.n_vicious:
        phat = ad.relu(ad.mul(ad.tanh(state.logits), Tensor._wrap(state.mask)))
        v = g.vicious
        out_part = ad.transpose(ad.max_rows(ad.take_rows(phat, v)))
        in_part = ad.max_cols(ad.take_cols(phat, v))
        total = ad.add(total, ad.scale(ad.l1_norm(ad.maximum(out_part, in_part)), config.gamma))
    return total


def soft_activation(state: PerturbationState, g: AugmentedGraph) -> np.ndarray:
    """Numeric soft activation per vicious node (see :meth:`AttackProblem.soft_activation`)."""
    v = g.vicious
    if len(v) == 0:
        return np.zeros(0)
    pos = np.maximum(state.relaxed, 0.0)
    return np.maximum(pos[v, :].max(axis=1), pos[:, v].max(axis=0))


def optimize(problem: AttackProblem, state: PerturbationState, config: AttackConfig) -> list[float]:
    """Adam on the logits; only controlled rows can receive gradient, so only
    that block is optimized and written back."""
    block = Tensor(state.logits.values[problem.rows], requires_grad=True)
    opt = ad.Adam([block], lr=config.lr)
    trace = []
    for _ in range(config.max_iters):
        with ad.Tape() as tape:
            terms = problem.loss_rows(block, config)
        tape.backward(terms.total)
        opt.step()
        trace.append(terms.total.item())
    state.logits.values[problem.rows] = block.values
    return trace


def run_attack(g: AugmentedGraph, model: LinkPredictor, config: AttackConfig | None = None,
               method: str = "savage", init_P: np.ndarray | None = None) -> AttackResult:
    """Optimize, threshold, apply and score one attack.

    With ``init_P`` the relaxed state is warm-started from that discrete
    perturbation (the AIGA-initialized variants).
    """
    config = config or AttackConfig()
    problem = AttackProblem(g, model)
    if init_P is None:
        state = init_state(g, config, problem.mask)
    else:
        state = init_from(init_P, g, seed=config.seed, mask=problem.mask)
    trace = optimize(problem, state, config)
    P = discretize(state, config)
    res = problem.result(P, method, config.success_threshold, config.max_iters, trace)
    log.debug("%s s=%d t=%d pre=%.3f post=%.3f AN=%d", method, g.source, g.target,
              res.pre_prob, res.post_prob, res.n_active_vicious)
    return res
