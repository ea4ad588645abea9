"""Experiment driver: data, victim training, pair sampling, attacks and reports.

A run is fully determined by its :class:`ExperimentConfig` and master seed.
Every method attacks the same sampled pair list, and all outputs are written
without timestamps so that repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from .attack import (AttackConfig, AttackProblem, AttackResult, discretize, init_from, init_state,
                     optimize)
from .baselines import BaselineConfig, aiga_attack, rand_attack
from .graph import DirectedGraph, augment, l_hop_neighborhood, load_graph
from .heuristics import HEURISTICS, lift_detail
from .model import DECISION_THRESHOLD, LinkPredictor, TrainConfig, evaluate, split_edges, train

log = logging.getLogger(__name__)

METHODS = ("savage", "savage_n", "savage_i", "savage_ni", "aiga", "rand_l", "rand_h")
GENERATORS = ("erdos_renyi", "preferential_attachment")
MAX_DRAWS = 10_000

_METHOD_DEFAULTS = {
    "savage": {},
    "savage_n": {"beta": 0.0, "gamma": 0.0},
    "savage_i": {},
    "savage_ni": {"beta": 0.0, "gamma": 0.0},
    "aiga": {"kind": "aiga"},
    "rand_l": {"kind": "rand", "p": 0.25},
    "rand_h": {"kind": "rand", "p": 0.75},
}


class PairSamplingError(RuntimeError):
    """Not enough eligible pairs within the draw budget."""


# ---------------------------------------------------------------- data


def generate_synthetic(kind: str, n: int, density: float, k_features: int, seed: int = 0) -> DirectedGraph:
    """Random digraph with uniform ``[0, 1]`` features.

    ``erdos_renyi``: every ordered pair ``i != j`` is an edge with probability
    ``density``. ``preferential_attachment``: node ``i`` sends ``density``
    (an integer) edges to earlier nodes chosen with probability proportional
    to total degree plus one.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if k_features < 1:
        raise ValueError("k_features must be positive")
    rng = np.random.default_rng(seed)
    a = np.zeros((n, n))
    if kind == "erdos_renyi":
        if not 0.0 <= density <= 1.0:
            raise ValueError("edge probability must lie in [0, 1]")
        a = (rng.random((n, n)) < density).astype(np.float64)
        np.fill_diagonal(a, 0.0)
    elif kind == "preferential_attachment":
        m = int(density)
        if m != density or m < 0:
            raise ValueError("preferential attachment needs a non-negative integer edge count")
        deg = np.zeros(n)
        for i in range(1, n):
            k = min(m, i)
            if k == 0:
                continue
            w = deg[:i] + 1.0
            dst = rng.choice(i, size=k, replace=False, p=w / w.sum())
            a[i, dst] = 1.0
            deg[i] += k
            deg[dst] += 1.0
    else:
        raise ValueError(f"unknown generator {kind!r}; expected one of {GENERATORS}")
    x = rng.uniform(0.0, 1.0, size=(n, k_features))
    return DirectedGraph(a, x)


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {
        "generator": "erdos_renyi", "n": 200, "density": 0.05, "k_features": 16})
    train: dict = field(default_factory=dict)
    model_path: str | None = None
    n_pairs: int = 20
    n_vicious: int = 50
    feature_mode: str = "existent"
    methods: list = field(default_factory=lambda: list(METHODS))
    attack: dict = field(default_factory=dict)
    method_config: dict = field(default_factory=dict)
    out_dir: str = "runs/default"
    seed: int = 0

    def __post_init__(self):
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be at least 1")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; expected a subset of {METHODS}")
        AttackConfig(**self.attack)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        extra = set(d) - names - {"sweep"}
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self) -> TrainConfig:
        kw = {"seed": self.seed}
        kw.update(self.train)
        return TrainConfig(**kw)

    def method_settings(self, method: str, pair_seed: int):
        """Attack or baseline config for ``method`` on one pair."""
        kw = dict(_METHOD_DEFAULTS[method])
        kw.update(self.method_config.get(method, {}))
        if method in ("aiga", "rand_l", "rand_h"):
            kw.setdefault("budget", self.n_vicious)
            return BaselineConfig(seed=pair_seed, **kw)
        base = dict(self.attack)
        base.update(kw)
        base["seed"] = pair_seed
        return AttackConfig(**base)


def load_dataset(config: ExperimentConfig) -> DirectedGraph:
    d = config.dataset
    if "edges" in d:
        return load_graph(d["edges"], d["features"], d.get("n"))
    return generate_synthetic(d.get("generator", "erdos_renyi"), int(d["n"]), float(d["density"]),
                              int(d["k_features"]), d.get("seed", config.seed))


def prepare_model(config: ExperimentConfig, g: DirectedGraph) -> tuple[LinkPredictor, dict]:
    """Load the configured checkpoint or train a fresh victim; returns test metrics."""
    tc = config.train_config()
    split = split_edges(g, tc.train_ratio, tc.seed)
    if config.model_path and Path(config.model_path).exists():
        model = LinkPredictor.load(config.model_path)
    else:
        model, _ = train(g, split, tc)
        if config.model_path:
            model.save(config.model_path)
    return model, evaluate(model, g, split)


# ---------------------------------------------------------------- pairs


def pair_violation(g: DirectedGraph, h: np.ndarray, model: LinkPredictor, s: int, t: int,
                   threshold: float = DECISION_THRESHOLD) -> str | None:
    """Name of the first eligibility constraint ``(s, t)`` fails, or None."""
    if s == t:
        return "distinct nodes"
    if g.adjacency[t, s] or g.adjacency[s, t]:
        return "no edge between s and t"
    if t in l_hop_neighborhood(g, s, 2):
        return "t outside 2-hop neighborhood of s"
    if s in l_hop_neighborhood(g, t, 2):
        return "s outside 2-hop neighborhood of t"
    if model.score_pairs(h, [(t, s)])[0] >= threshold:
        return "pre-attack score below threshold"
    return None


def sample_pairs(g: DirectedGraph, model: LinkPredictor, n_pairs: int, seed: int = 0,
                 max_draws: int = MAX_DRAWS, threshold: float = DECISION_THRESHOLD) -> list[tuple[int, int]]:
    """Uniformly drawn distinct ``(s, t)`` pairs that satisfy the eligibility constraints."""
    rng = np.random.default_rng([seed, 2])
    h = model.embed(g.adjacency, g.features)
    pairs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    failures: Counter = Counter()
    for _ in range(max_draws):
        s, t = (int(v) for v in rng.integers(0, g.n, size=2))
        if (s, t) in seen:
            failures["pair not already sampled"] += 1
            continue
        why = pair_violation(g, h, model, s, t, threshold)
        if why:
            failures[why] += 1
            continue
        seen.add((s, t))
        pairs.append((s, t))
        if len(pairs) == n_pairs:
            return pairs
    worst = failures.most_common(1)[0][0] if failures else "none"
    raise PairSamplingError(
        f"found {len(pairs)} of {n_pairs} eligible pairs in {max_draws} draws; "
        f"most frequently failed constraint: {worst} ({dict(failures)})")


# ---------------------------------------------------------------- metrics


@dataclass
class MethodSummary:
    method: str
    n_pairs: int
    AR: float
    AP: float
    AN: float
    KL_x1e3: float
    AN_successful: float

    @classmethod
    def from_records(cls, method: str, records: list[dict]) -> "MethodSummary":
        recs = [r for r in records if r["method"] == method]
        if not recs:
            raise ValueError(f"no records for method {method!r}")
        ok = [r for r in recs if r["success"]]
        return cls(
            method=method, n_pairs=len(recs),
            AR=sum(r["success"] for r in recs) / len(recs),
            AP=float(np.mean([r["post_prob"] for r in recs])),
            AN=float(np.mean([r["n_active_vicious"] for r in recs])),
            KL_x1e3=float(np.mean([r["kl_shift"] for r in recs]) * 1e3),
            AN_successful=float(np.mean([r["n_active_vicious"] for r in ok])) if ok else float("nan"),
        )


def summarize(records: list[dict]) -> list[MethodSummary]:
    methods = list(dict.fromkeys(r["method"] for r in records))
    return [MethodSummary.from_records(m, records) for m in methods]


def write_summary(path, summaries: list[MethodSummary]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "n_pairs", "AR", "AP", "AN", "KL_x1e3", "AN_successful"])
        for s in summaries:
            w.writerow([s.method, s.n_pairs, repr(s.AR), repr(s.AP), repr(s.AN),
                        repr(s.KL_x1e3), repr(s.AN_successful)])


def read_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------- runs


@dataclass
class Setup:
    graph: DirectedGraph
    model: LinkPredictor
    metrics: dict
    pairs: list[tuple[int, int]]


def setup(config: ExperimentConfig, model: LinkPredictor | None = None) -> Setup:
    g = load_dataset(config)
    if model is None:
        model, metrics = prepare_model(config, g)
    else:
        split = split_edges(g, config.train_config().train_ratio, config.train_config().seed)
        metrics = evaluate(model, g, split)
    pairs = sample_pairs(g, model, config.n_pairs, config.seed)
    return Setup(g, model, metrics, pairs)


def _savage(problem: AttackProblem, cfg: AttackConfig, method: str,
            init_P: np.ndarray | None = None) -> AttackResult:
    g = problem.g
    if init_P is None:
        state = init_state(g, cfg, problem.mask)
    else:
        state = init_from(init_P, g, seed=cfg.seed, mask=problem.mask)
    trace = optimize(problem, state, cfg)
    return problem.result(discretize(state, cfg), method, cfg.success_threshold, cfg.max_iters, trace)


def attack_pair(config: ExperimentConfig, st: Setup, pair_id: int, methods=None) -> list[AttackResult]:
    """Run ``methods`` (default: all configured) on one sampled pair."""
    s, t = st.pairs[pair_id]
    pair_seed = config.seed * 100_003 + pair_id
    ga = augment(st.graph, config.n_vicious, config.feature_mode, seed=pair_seed, source=s, target=t)
    problem = AttackProblem(ga, st.model)
    methods = list(methods or config.methods)
    out = []
    aiga_P = None
    needs_aiga = any(m in ("savage_i", "savage_ni") for m in methods)
    if needs_aiga or "aiga" in methods:
        r = aiga_attack(ga, st.model, config.method_settings("aiga", pair_seed), problem)
        aiga_P = r.discrete_P
        if "aiga" in methods:
            out.append(r)
    for m in methods:
        if m == "aiga":
            continue
        cfg = config.method_settings(m, pair_seed)
        if m in ("rand_l", "rand_h"):
            out.append(rand_attack(ga, st.model, cfg, problem, method=m))
        else:
            out.append(_savage(problem, cfg, m, aiga_P if m in ("savage_i", "savage_ni") else None))
    order = {m: i for i, m in enumerate(methods)}
    return sorted(out, key=lambda r: order[r.method])


@dataclass
class ExperimentReport:
    summaries: list[MethodSummary]
    records: list[dict]
    metrics: dict
    pairs: list[tuple[int, int]]


def run_experiment(config: ExperimentConfig, model: LinkPredictor | None = None,
                   write: bool = True) -> ExperimentReport:
    """Attack every sampled pair with every method; write ``records.jsonl``,
    ``summary.csv`` and ``metadata.json`` under ``config.out_dir``."""
    st = setup(config, model)
    out = Path(config.out_dir)
    records: list[dict] = []
    fh = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "records.jsonl", "w")
    try:
        for i in range(len(st.pairs)):
            for r in attack_pair(config, st, i):
                rec = r.to_record(pair_id=i, seed=config.seed)
                records.append(rec)
                if fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
                    fh.flush()
    finally:
        if fh:
            fh.close()
    summaries = summarize(records)
    if write:
        write_summary(out / "summary.csv", summaries)
        meta = {"config": config.to_dict(), "victim": st.metrics,
                "pairs": [list(p) for p in st.pairs],
                "AN_averaging": "AN averages over all pairs; AN_successful over successful attacks only"}
        (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return ExperimentReport(summaries, records, st.metrics, st.pairs)


# ---------------------------------------------------------------- transfer


TRANSFER_COLUMNS = ["heuristic", "pair", "success", "before", "after", "lift", "capped"]


def transfer_rows(ga, result: AttackResult, pair_id: int) -> list[dict]:
    """All eight heuristic lifts for the predicted link ``t -> s``."""
    before = np.asarray(ga.adjacency)
    after = result.attacked_adjacency
    rows = []
    for h in HEURISTICS:
        d = lift_detail(h, before, after, ga.target, ga.source)
        rows.append({"heuristic": h, "pair": pair_id, "success": result.success,
                     "before": d.before, "after": d.after, "lift": d.value, "capped": d.capped})
    return rows


def aggregate_transfer(rows: list[dict]) -> list[dict]:
    """Per heuristic: mean of ratios and ratio of means over successful attacks
    (over all pairs if none succeeded)."""
    agg = []
    for h in HEURISTICS:
        hr = [r for r in rows if r["heuristic"] == h]
        ok = [r for r in hr if r["success"]] or hr
        if not ok:
            continue
        mb = float(np.mean([r["before"] for r in ok]))
        ma = float(np.mean([r["after"] for r in ok]))
        agg.append({"heuristic": h, "pair": "mean_of_ratios", "success": "", "before": mb, "after": ma,
                    "lift": float(np.mean([r["lift"] for r in ok])),
                    "capped": any(r["capped"] for r in ok)})
        rom = ma / mb if mb > 0 else (1.0 if ma == 0 else float("inf"))
        agg.append({"heuristic": h, "pair": "ratio_of_means", "success": "", "before": mb, "after": ma,
                    "lift": rom, "capped": False})
    return agg


def write_transfer(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRANSFER_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


@dataclass
class TransferReport:
    rows: list[dict]
    aggregate: list[dict]
    results: list[AttackResult]

    def mean_lift(self, heuristic: str) -> float:
        return next(a["lift"] for a in self.aggregate
                    if a["heuristic"] == heuristic and a["pair"] == "mean_of_ratios")


def run_transfer(config: ExperimentConfig, model: LinkPredictor | None = None,
                 write: bool = True) -> TransferReport:
    """SAVAGE on every sampled pair, then heuristic lifts before and after."""
    st = setup(config, model)
    rows, results = [], []
    for i, (s, t) in enumerate(st.pairs):
        pair_seed = config.seed * 100_003 + i
        ga = augment(st.graph, config.n_vicious, config.feature_mode, seed=pair_seed, source=s, target=t)
        problem = AttackProblem(ga, st.model)
        r = _savage(problem, config.method_settings("savage", pair_seed), "savage")
        results.append(r)
        rows.extend(transfer_rows(ga, r, i))
    agg = aggregate_transfer(rows)
    if write:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_transfer(out / "transfer.csv", rows + agg)
    return TransferReport(rows, agg, results)


# ---------------------------------------------------------------- sweeps


SWEEP_COLUMNS = ["param", "value", "resources", "mean_active_vicious", "mean_edges_changed", "AR", "AP"]


@dataclass
class SweepReport:
    param: str
    rows: list[dict]

    @property
    def values(self) -> list[float]:
        return [r["value"] for r in self.rows]

    @property
    def resources(self) -> list[float]:
        return [r["resources"] for r in self.rows]

    def spearman(self) -> float:
        if len(self.rows) < 2:
            return float("nan")
        return float(spearmanr(self.values, self.resources).statistic)


def sweep(param: str, values, config: ExperimentConfig, model: LinkPredictor | None = None,
          write: bool = True) -> SweepReport:
    """Rerun SAVAGE on one fixed pair list while varying ``beta`` or ``gamma``.

    Resources are the mean number of edges the discrete perturbation changes
    plus the mean number of active vicious nodes, i.e. everything the two
    penalties charge for.
    """
    if param not in ("beta", "gamma"):
        raise ValueError("sweep parameter must be 'beta' or 'gamma'")
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep needs at least one value")
    st = setup(config, model)
    problems = []
    for i, (s, t) in enumerate(st.pairs):
        pair_seed = config.seed * 100_003 + i
        ga = augment(st.graph, config.n_vicious, config.feature_mode, seed=pair_seed, source=s, target=t)
        problems.append((pair_seed, AttackProblem(ga, st.model)))
    rows = []
    for value in values:
        res = []
        for pair_seed, problem in problems:
            cfg = config.method_settings("savage", pair_seed)
            setattr(cfg, param, value)
            cfg.__post_init__()
            res.append(_savage(problem, cfg, "savage"))
        an = float(np.mean([r.n_active_vicious for r in res]))
        ed = float(np.mean([r.edges_added + r.edges_removed for r in res]))
        rows.append({"param": param, "value": value, "resources": an + ed,
                     "mean_active_vicious": an, "mean_edges_changed": ed,
                     "AR": float(np.mean([r.success for r in res])),
                     "AP": float(np.mean([r.post_prob for r in res]))})
        log.info("sweep %s=%g resources=%.2f", param, value, an + ed)
    if write:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"sweep_{param}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return SweepReport(param, rows)
