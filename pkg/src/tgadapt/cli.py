"""Command-line entry points.

Subcommands: ingest, synth, train, eval, bench-finder, bench-cache.
Config files are JSON with RunConfig keys; flags override file values,
and TGADAPT_SEED / TGADAPT_WORKERS override both.  Exit codes: 0 ok,
1 config error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .cache import cache_report, make_cache, oracle_cache, run_trace
from .finder import bench_finder
from .graph import DataError, chronological_split, ingest_events, load_manifest, save_dataset
from .synth import SynthConfig, generate_files
from .training import ConfigError, RunConfig, Trainer, run_experiment


def _load_run_config(args):
    data = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            data.update(json.load(fh))
    for key in ("manifest", "aggregator", "decoder", "finder_policy", "m", "n",
                "batch_size", "epochs", "lr", "gamma", "cache_fraction",
                "hidden", "enc_dim", "window", "out_dir", "workers"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            data[key] = val
    for key, flag in (("adaptive_minibatch", "no_adaptive_minibatch"),
                      ("adaptive_neighbor", "no_adaptive_neighbor")):
        if getattr(args, flag, False):
            data[key] = False
    if getattr(args, "seeds", None):
        data["seeds"] = [int(s) for s in args.seeds.split(",")]
    if os.environ.get("TGADAPT_SEED"):
        data["seeds"] = [int(os.environ["TGADAPT_SEED"])]
    if os.environ.get("TGADAPT_WORKERS"):
        data["workers"] = int(os.environ["TGADAPT_WORKERS"])
    return RunConfig.from_dict(data)


def cmd_ingest(args):
    g = ingest_events(args.events, d_e=args.d_e,
                      node_feature_path=args.node_features)
    out = Path(args.out)
    manifest = save_dataset(g, out, name=args.name)
    print(json.dumps({
        "manifest": str(manifest), "num_nodes": g.num_nodes,
        "num_events": g.num_events, "d_v": g.d_v, "d_e": g.d_e,
    }, indent=2))
    return 0


def cmd_synth(args):
    cfg = SynthConfig(nodes=args.nodes, events=args.events,
                      communities=args.communities,
                      deprecated_prob=args.deprecated_prob,
                      migrate_frac=args.migrate_frac, skew=args.skew,
                      repeat_prob=args.repeat_prob, seed=args.seed)
    manifest = generate_files(cfg, args.out, name=args.name)
    print(json.dumps({"manifest": str(manifest)}, indent=2))
    return 0


def cmd_train(args):
    cfg = _load_run_config(args)
    summary = run_experiment(cfg)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_eval(args):
    cfg = _load_run_config(args)
    graph = load_manifest(cfg.manifest)
    split = chronological_split(graph, cfg.split_ratios, cfg.window)
    trainer = Trainer(graph, split, cfg, cfg.seeds[0])
    trainer.load_checkpoints(args.checkpoint)
    mrr = trainer.evaluate(split.test_eids())
    print(json.dumps({"test_mrr": mrr}, indent=2))
    return 0


def cmd_bench_finder(args):
    if args.manifest:
        graph = load_manifest(args.manifest)
    else:
        from .synth import SynthConfig, generate
        graph, _ = generate(SynthConfig(nodes=args.nodes, events=args.events,
                                        seed=args.seed))
    workers = [int(w) for w in args.workers.split(",")]
    report = bench_finder(graph, num_queries=args.queries, m=args.m,
                          seed=args.seed, worker_counts=workers)
    print(json.dumps(report, indent=2))
    return 0


def cmd_bench_cache(args):
    rng = np.random.default_rng(args.seed)
    ranks = np.arange(1, args.edges + 1, dtype=np.float64)
    weights = ranks ** (-args.zipf)
    cdf = np.cumsum(weights / weights.sum())
    per_epoch = args.accesses // args.epochs
    trace = [np.searchsorted(cdf, rng.random(per_epoch)) for _ in range(args.epochs)]
    counts = np.stack([np.bincount(t, minlength=args.edges) for t in trace])
    state = make_cache(args.edges, args.k)
    rates = run_trace(state, trace)
    oracle = oracle_cache(counts, state.k)
    report = cache_report(state, oracle_rates=oracle)
    report["strategy_hit_rates"] = rates
    print(json.dumps(report, indent=2))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tgadapt",
                                description="dynamic-graph adaptive sampling toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    pi = sub.add_parser("ingest", help="parse an event file into a dataset directory")
    pi.add_argument("--events", required=True)
    pi.add_argument("--node-features", default=None)
    pi.add_argument("--d-e", type=int, default=None)
    pi.add_argument("--out", required=True)
    pi.add_argument("--name", default="dataset")
    pi.set_defaults(fn=cmd_ingest)

    ps = sub.add_parser("synth", help="generate a synthetic noisy dynamic graph")
    ps.add_argument("--nodes", type=int, default=5000)
    ps.add_argument("--events", type=int, default=100_000)
    ps.add_argument("--communities", type=int, default=16)
    ps.add_argument("--deprecated-prob", type=float, default=0.0)
    ps.add_argument("--migrate-frac", type=float, default=0.0)
    ps.add_argument("--skew", type=float, default=1.2)
    ps.add_argument("--repeat-prob", type=float, default=0.5)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)
    ps.add_argument("--name", default="synth")
    ps.set_defaults(fn=cmd_synth)

    def add_run_flags(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--manifest", default=None)
        sp.add_argument("--aggregator", default=None)
        sp.add_argument("--decoder", default=None)
        sp.add_argument("--finder-policy", dest="finder_policy", default=None)
        sp.add_argument("--m", type=int, default=None)
        sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        sp.add_argument("--epochs", type=int, default=None)
        sp.add_argument("--lr", type=float, default=None)
        sp.add_argument("--gamma", type=float, default=None)
        sp.add_argument("--cache-fraction", dest="cache_fraction", type=float, default=None)
        sp.add_argument("--hidden", type=int, default=None)
        sp.add_argument("--enc-dim", dest="enc_dim", type=int, default=None)
        sp.add_argument("--window", type=int, default=None)
        sp.add_argument("--seeds", default=None, help="comma-separated seed list")
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out-dir", dest="out_dir", default=None)
        sp.add_argument("--no-adaptive-minibatch", action="store_true")
        sp.add_argument("--no-adaptive-neighbor", action="store_true")

    pt = sub.add_parser("train", help="train and evaluate on a dataset")
    add_run_flags(pt)
    pt.set_defaults(fn=cmd_train)

    pe = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    add_run_flags(pe)
    pe.add_argument("--checkpoint", required=True)
    pe.set_defaults(fn=cmd_eval)

    pf = sub.add_parser("bench-finder", help="neighbor-finder throughput report")
    pf.add_argument("--manifest", default=None)
    pf.add_argument("--nodes", type=int, default=10_000)
    pf.add_argument("--events", type=int, default=1_000_000)
    pf.add_argument("--queries", type=int, default=10_000)
    pf.add_argument("--m", type=int, default=25)
    pf.add_argument("--workers", default="1,8")
    pf.add_argument("--seed", type=int, default=0)
    pf.set_defaults(fn=cmd_bench_finder)

    pc = sub.add_parser("bench-cache", help="cache-vs-oracle hit-rate report")
    pc.add_argument("--edges", type=int, default=100_000)
    pc.add_argument("--accesses", type=int, default=1_000_000)
    pc.add_argument("--epochs", type=int, default=5)
    pc.add_argument("--zipf", type=float, default=1.1)
    pc.add_argument("--k", type=float, default=0.1)
    pc.add_argument("--seed", type=int, default=0)
    pc.set_defaults(fn=cmd_bench_cache)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - structured abort
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
