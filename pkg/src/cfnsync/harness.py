"""Experiment orchestration: arrival-rate sweeps, the encoding-width
ablation, and machine-readable result export."""
from __future__ import annotations

import concurrent.futures
import csv
import datetime
import json
import os
import subprocess
from typing import Optional

import numpy as np

from . import _kernels
from .config import RunConfig
from .simulate import Metrics, default_ap_policy, run_episode
from .training import TrainingSample, train

SCHEMA_VERSION = 1
HIST_BIN_WIDTH = 0.02
HIST_MAX = 2.0

SUMMARY_FIELDS = ("policy", "lam", "n_seeds", "success_rate_mean",
                  "success_rate_std", "update_freq_mean", "update_freq_std",
                  "mean_delay_mean", "mean_delay_std", "objective_mean",
                  "objective_std")
ABLATION_FIELDS = ("d_sem", "lam", "n_seeds", "success_rate_mean",
                   "success_rate_std", "update_freq_mean", "update_freq_std")


def service_capacity(cfg: RunConfig) -> float:
    """Sustainable tasks/second across both servers at the mean workload."""
    mu = cfg.workload.mu_cycles
    return (cfg.ap.n_cores * cfg.ap.freq + cfg.sn.n_cores * cfg.sn.freq) / mu


def interval_histogram(intervals: list[float]) -> list[tuple[float, float, int]]:
    """Fixed bins of HIST_BIN_WIDTH up to HIST_MAX plus one overflow bin;
    total mass always equals len(intervals)."""
    n_bins = int(round(HIST_MAX / HIST_BIN_WIDTH))
    counts = [0] * (n_bins + 1)
    for v in intervals:
        i = int(v / HIST_BIN_WIDTH)
        counts[min(i, n_bins)] += 1
    rows = []
    for i in range(n_bins):
        rows.append((i * HIST_BIN_WIDTH, (i + 1) * HIST_BIN_WIDTH, counts[i]))
    rows.append((HIST_MAX, float("inf"), counts[n_bins]))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _cell(cfg: RunConfig, lam: float, policy: str, seed: int, params) -> Metrics:
    env = cfg.copy()
    env.workload.lambda_in = lam
    return run_episode(env, policy, default_ap_policy(policy), seed,
                       params=params if policy in ("semantic", "threshold") else None)


def sweep(cfg: RunConfig, params, progress: bool = False) -> list[Metrics]:
    """Cross product of (arrival rate, policy, seed); cells run on worker
    threads, results ordered deterministically."""
    cells = [(lam, pol, seed)
             for pol in cfg.sweep.policies
             for lam in cfg.sweep.lambdas
             for seed in cfg.sweep.seeds]
    results: list[Metrics] = []
    workers = max(1, cfg.sweep.workers)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futs = {pool.submit(_cell, cfg, float(lam), pol, int(seed), params): (lam, pol, seed)
                for lam, pol, seed in cells}
        for fut in concurrent.futures.as_completed(futs):
            results.append(fut.result())
            if progress:
                m = results[-1]
                print(f"  {m.policy:10s} lam={m.lam:<5g} seed={m.seed}: "
                      f"success={m.success_rate:.4f} upd/s={m.update_freq:.2f}")
    results.sort(key=lambda m: (m.policy, m.lam, m.seed))
    return results


def summarize(results: list[Metrics]) -> list[dict]:
    keys = sorted({(m.policy, m.lam) for m in results})
    rows = []
    for pol, lam in keys:
        grp = [m for m in results if m.policy == pol and m.lam == lam]

        def ms(attr):
            vals = [getattr(m, attr) for m in grp]
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            return float(np.mean(vals)), std

        sr, sr_s = ms("success_rate")
        uf, uf_s = ms("update_freq")
        md, md_s = ms("mean_delay")
        ob, ob_s = ms("objective")
        rows.append(dict(zip(SUMMARY_FIELDS, (pol, lam, len(grp), sr, sr_s,
                                              uf, uf_s, md, md_s, ob, ob_s))))
    return rows


def ablate(cfg: RunConfig, samples: list[TrainingSample],
           progress: bool = False) -> tuple[list[Metrics], list[dict]]:
    """Retrains encoder and heads at each semantic width, then evaluates the
    learned stack at the ablation arrival rate."""
    results: list[Metrics] = []
    env = cfg.copy()
    env.workload.lambda_in = cfg.ablation.lambda_in
    for d in cfg.ablation.d_sem_list:
        if progress:
            print(f"  training d_sem={d}")
        params, _, _ = train(samples, cfg, d_sem=int(d))
        env.encoder.d_sem = int(d)
        for seed in cfg.ablation.seeds:
            m = run_episode(env, "semantic", "learned", int(seed), params=params)
            m.policy = f"semantic-d{d}"
            results.append(m)
            if progress:
                print(f"    seed={seed}: success={m.success_rate:.4f} "
                      f"upd/s={m.update_freq:.2f}")
    rows = []
    for d in cfg.ablation.d_sem_list:
        grp = [m for m in results if m.policy == f"semantic-d{d}"]
        sr = [m.success_rate for m in grp]
        uf = [m.update_freq for m in grp]
        rows.append(dict(zip(ABLATION_FIELDS, (
            int(d), cfg.ablation.lambda_in, len(grp),
            float(np.mean(sr)), float(np.std(sr, ddof=1)) if len(sr) > 1 else 0.0,
            float(np.mean(uf)), float(np.std(uf, ddof=1)) if len(uf) > 1 else 0.0))))
    return results, rows


# -- export -----------------------------------------------------------------------


def _git_commit() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_csv(path: str, fields, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def export(results: list[Metrics], out_dir: str, cfg: RunConfig,
           summary_rows: Optional[list[dict]] = None,
           ablation_rows: Optional[list[dict]] = None) -> dict:
    """Writes results.csv, the per-cell summary, the resolved-config manifest,
    per-run update-interval histograms, and a raw JSON for re-export."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    paths["results"] = os.path.join(out_dir, "results.csv")
    write_csv(paths["results"], Metrics.CSV_FIELDS, [m.csv_row() for m in results])

    if summary_rows is None:
        summary_rows = summarize(results)
    paths["summary"] = os.path.join(out_dir, "results_summary.csv")
    write_csv(paths["summary"], SUMMARY_FIELDS,
              [[r[k] for k in SUMMARY_FIELDS] for r in summary_rows])

    if ablation_rows is not None:
        paths["ablation"] = os.path.join(out_dir, "ablation_summary.csv")
        write_csv(paths["ablation"], ABLATION_FIELDS,
                  [[r[k] for k in ABLATION_FIELDS] for r in ablation_rows])

    hist_dir = os.path.join(out_dir, "histograms")
    os.makedirs(hist_dir, exist_ok=True)
    for m in results:
        name = f"intervals_{m.policy}_lam{m.lam:g}_seed{m.seed}.csv"
        write_csv(os.path.join(hist_dir, name), ("bin_left", "bin_right", "count"),
                  interval_histogram(m.update_intervals))
    paths["histograms"] = hist_dir

    paths["raw"] = os.path.join(out_dir, "raw_results.json")
    with open(paths["raw"], "w") as f:
        json.dump([{**{k: getattr(m, k) for k in Metrics.CSV_FIELDS},
                    "update_intervals": list(map(float, m.update_intervals))}
                   for m in results], f)

    paths["manifest"] = os.path.join(out_dir, "manifest.json")
    with open(paths["manifest"], "w") as f:
        json.dump({
            "schema_version": SCHEMA_VERSION,
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "commit": _git_commit(),
            "backend": _kernels.backend_name(),
            "service_capacity": service_capacity(cfg),
            "hist_bin_width": HIST_BIN_WIDTH,
            "hist_max": HIST_MAX,
            "config": cfg.to_dict(),
        }, f, indent=2, sort_keys=True)
    return paths


def metrics_from_raw(path: str) -> list[Metrics]:
    with open(path) as f:
        raw = json.load(f)
    out = []
    for r in raw:
        m = Metrics(policy=r["policy"], lam=r["lam"], seed=r["seed"],
                    episode_len=r["episode_len"], backend=r["backend"])
        for k in Metrics.CSV_FIELDS:
            setattr(m, k, r[k])
        m.update_intervals = r["update_intervals"]
        out.append(m)
    return out
