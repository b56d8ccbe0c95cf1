"""Command-line entry point: ``sarp run|sweep|demo|gen-corpus``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import CorpusError, generate_synthetic_corpus
from .experiment import (ConfigError, ExperimentConfig, Setup, run_demo, run_experiment,
                         run_scalability_sweep, sweep_table)
from .simworld import WorldError, resolve_path

DEFAULT_DEMO_CONFIG = "demo.json"


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _overrides(args) -> dict:
    out = {"seed": args.seed, "trials": args.trials, "output": args.output}
    if getattr(args, "agents", None):
        out["agents"] = args.agents.split(",")
    return out


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config, **_overrides(args))
    if args.p_move is not None:
        cfg.p_move = args.p_move
    if args.tp is not None:
        cfg.perception = {**cfg.perception, "tp": args.tp}
    if args.fp is not None:
        cfg.perception = {**cfg.perception, "fp": args.fp}
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    report, _ = run_experiment(cfg)
    print(f"env={report.env} query={report.query} trials={cfg.trials} seed={cfg.seed}")
    print(report.table())
    if cfg.output:
        print(f"wrote {Path(cfg.output) / 'trials.csv'}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = run_scalability_sweep(cfg, args.distractors)
    print(sweep_table(rows))
    return 0


def cmd_demo(args) -> int:
    cfg = ExperimentConfig.load(args.config, seed=args.seed)
    if args.env:
        cfg.environment = args.env
    if args.query:
        cfg.query = args.query
    setup = Setup(cfg)
    result, text = run_demo(cfg, cfg.seed, setup)
    print(text)
    if args.json:
        Path(args.json).write_text(result.to_json(indent=2))
    return 0


def cmd_gen_corpus(args) -> int:
    with open(resolve_path(args.spec)) as fh:
        spec = json.load(fh)
    corpus = generate_synthetic_corpus(spec, args.seed)
    corpus.save(args.out)
    print(f"wrote {len(corpus)} images to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarp", description="Scene-graph-biased POMDP target search.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="experiment config (path or shipped name)")
        sp.add_argument("--seed", type=int, help="base seed")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--output", help="directory for CSV and report")
        sp.add_argument("--p-move", type=float, dest="p_move")
        sp.add_argument("--tp", type=float, help="detector true-positive rate")
        sp.add_argument("--fp", type=float, help="detector false-positive rate")

    run = sub.add_parser("run", help="paired batch experiment")
    common(run)
    run.add_argument("--agents", help="comma-separated subset of sarp,uniform,predefined,corpp")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="distractor-count sweep, SARP vs joint-state POMDP")
    common(sweep)
    sweep.add_argument("--distractors", type=_int_list, default=list(range(7)),
                       help="comma-separated counts (default 0..6)")
    sweep.set_defaults(func=cmd_sweep)

    demo = sub.add_parser("demo", help="single SARP episode with a per-step belief table")
    demo.add_argument("--env", help="environment file or shipped name")
    demo.add_argument("--query", help="target label")
    demo.add_argument("--seed", type=int, help="episode seed")
    demo.add_argument("--config", default=DEFAULT_DEMO_CONFIG)
    demo.add_argument("--json", help="also write the episode as JSON here")
    demo.set_defaults(func=cmd_demo)

    gen = sub.add_parser("gen-corpus", help="sample a synthetic corpus as NDJSON")
    gen.add_argument("spec", help="generator spec JSON")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_corpus)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CorpusError, WorldError, ValueError, OSError) as exc:
        print(f"sarp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
