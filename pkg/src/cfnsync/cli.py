"""Command-line front end: simulate, collect, train, sweep, ablate, export."""
from __future__ import annotations

import argparse
import csv
import json
import sys

from . import _kernels
from .config import ConfigError, load_config
from .harness import ablate, export, metrics_from_raw, service_capacity, sweep, write_csv
from .nn import load_params, save_params
from .simulate import Metrics, run_episode
from .training import collect_traces, label_dataset, load_dataset, save_dataset, train


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file (defaults used when omitted)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   dest="overrides", help="dotted-path config override, repeatable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cfnsync")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and print its metrics")
    _add_common(p)
    p.add_argument("--policy", default=None, help="update policy (default from config)")
    p.add_argument("--ap-policy", default="auto")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--params", default=None, help="trained parameter file")
    p.add_argument("--trace", default=None, help="write a per-event JSONL trace here")

    p = sub.add_parser("collect", help="generate and label a training dataset")
    _add_common(p)
    p.add_argument("--out", required=True, help="dataset CSV path")

    p = sub.add_parser("train", help="train encoder and heads on a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="parameter file path")
    p.add_argument("--curve", default=None, help="optional loss-curve CSV")

    p = sub.add_parser("sweep", help="arrival-rate sweep across policies and seeds")
    _add_common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("ablate", help="retrain and evaluate across semantic widths")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("export", help="regenerate CSV/manifest/histograms from raw results")
    _add_common(p)
    p.add_argument("--raw", required=True, help="raw_results.json from a sweep")
    p.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    if args.command == "simulate":
        policy = args.policy or cfg.policy.sn_policy
        params_path = args.params or cfg.policy.params_path
        params = load_params(params_path) if params_path else None
        m = run_episode(cfg, policy, args.ap_policy, args.seed, params=params,
                        trace_path=args.trace)
        print(json.dumps({k: getattr(m, k) for k in Metrics.CSV_FIELDS}, indent=2))
        return 0

    if args.command == "collect":
        samples = collect_traces(cfg, progress=True)
        label_dataset(samples, cfg.thresholds)
        save_dataset(samples, args.out)
        print(f"wrote {len(samples)} records to {args.out}")
        return 0

    if args.command == "train":
        samples = load_dataset(args.dataset)
        params, _, curve = train(samples, cfg, progress=True)
        save_params(params, args.out)
        if args.curve:
            write_csv(args.curve, ("epoch", "mean_loss"),
                      [(i + 1, v) for i, v in enumerate(curve)])
        print(f"trained on {len(samples)} records; final loss {curve[-1]:.4f}; "
              f"saved to {args.out}")
        return 0

    if args.command == "sweep":
        params = load_params(args.params)
        cap = service_capacity(cfg)
        print(f"service capacity at mean workload: {cap:g} tasks/s "
              f"(backend: {_kernels.backend_name()})")
        results = sweep(cfg, params, progress=True)
        paths = export(results, args.out, cfg)
        print(f"wrote {paths['results']}")
        return 0

    if args.command == "ablate":
        samples = load_dataset(args.dataset)
        results, rows = ablate(cfg, samples, progress=True)
        paths = export(results, args.out, cfg, ablation_rows=rows)
        print(f"wrote {paths['ablation']}")
        return 0

    if args.command == "export":
        results = metrics_from_raw(args.raw)
        paths = export(results, args.out, cfg)
        print(f"wrote {paths['results']}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
