"""Command-line entry point.

    linkattack synth    config.json --out data/
    linkattack train    config.json --out runs/a
    linkattack attack   config.json --seed 3 --out runs/a
    linkattack transfer config.json --out runs/a
    linkattack sweep    config.json --out runs/a
    linkattack report   config.json --out runs/a

Failures exit with status 1 and print a JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .graph import save_graph
from .harness import (ExperimentConfig, load_dataset, prepare_model, read_records, run_experiment,
                      run_transfer, summarize, sweep, write_summary)

log = logging.getLogger("linkattack")


def _load(args) -> tuple[ExperimentConfig, dict]:
    with open(args.config) as fh:
        raw = json.load(fh)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = args.out
    return ExperimentConfig.from_dict(raw), raw


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def cmd_synth(args) -> None:
    cfg, _ = _load(args)
    g = load_dataset(cfg)
    out = Path(cfg.out_dir)
    save_graph(g, out / "edges.tsv", out / "features.csv")
    _emit({"nodes": g.n, "edges": g.n_edges, "features": g.n_features, "out": str(out)})


def cmd_train(args) -> None:
    cfg, _ = _load(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.model_path:
        cfg.model_path = str(out / "model.json")
    g = load_dataset(cfg)
    model, metrics = prepare_model(cfg, g)
    (out / "victim.json").write_text(json.dumps(metrics, sort_keys=True) + "\n")
    _emit({"model": cfg.model_path, **metrics})


def cmd_attack(args) -> None:
    cfg, _ = _load(args)
    rep = run_experiment(cfg)
    _emit({"out": cfg.out_dir, "victim": rep.metrics,
           "summary": [vars(s) for s in rep.summaries]})


def cmd_transfer(args) -> None:
    cfg, _ = _load(args)
    rep = run_transfer(cfg)
    _emit({"out": cfg.out_dir,
           "mean_lift": {a["heuristic"]: a["lift"] for a in rep.aggregate if a["pair"] == "mean_of_ratios"}})


def cmd_sweep(args) -> None:
    cfg, raw = _load(args)
    block = raw.get("sweep", {})
    params = [args.param] if args.param else block.get("params", ["beta", "gamma"])
    values = block.get("values", list(range(11)))
    result = {}
    for p in params:
        rep = sweep(p, values, cfg)
        result[p] = {"spearman": rep.spearman(), "resources": rep.resources}
    _emit({"out": cfg.out_dir, "sweeps": result})


def cmd_report(args) -> None:
    cfg, _ = _load(args)
    out = Path(cfg.out_dir)
    records = read_records(out / "records.jsonl")
    summaries = summarize(records)
    write_summary(out / "summary.csv", summaries)
    _emit({"out": str(out), "summary": [vars(s) for s in summaries]})


COMMANDS = {
    "synth": (cmd_synth, "generate the configured synthetic graph and write it to disk"),
    "train": (cmd_train, "train the victim link predictor and save a checkpoint"),
    "attack": (cmd_attack, "run every configured attack method on sampled pairs"),
    "transfer": (cmd_transfer, "measure heuristic lift under SAVAGE perturbations"),
    "sweep": (cmd_sweep, "vary beta or gamma and record resources used"),
    "report": (cmd_report, "rebuild summary.csv from records.jsonl"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkattack", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (fn, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "sweep":
            p.add_argument("--param", choices=("beta", "gamma"), default=None,
                           help="sweep only this penalty")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # reported as a machine-readable record
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "command": args.command}, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
