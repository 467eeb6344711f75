"""End-to-end acceptance gate.

Session fixtures build the bootstrap dataset, train the full stack once,
and run the arrival-rate sweep; each criterion prints its own pass/fail
line. Expect roughly half an hour of wall time, dominated by the two
60-epoch trainings (the main stack and the width-1 ablation arm).
"""
import time

import numpy as np
import pytest

from cfnsync.config import load_config
from cfnsync.encoder import EncoderConfig
from cfnsync.harness import interval_histogram, service_capacity, sweep
from cfnsync.nn import grad_check
from cfnsync.simulate import run_episode
from cfnsync.training import (Batch, Models, TrainingSample, collect_traces,
                              head_agreement, joint_loss, label_dataset,
                              label_forward, label_update, train)

HOLDOUT_FRAC = 0.15


def _report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


# -- session fixtures -----------------------------------------------------------


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def dataset(cfg):
    samples = label_dataset(collect_traces(cfg), cfg.thresholds)
    return samples


@pytest.fixture(scope="session")
def split(dataset):
    rng = np.random.default_rng(123)
    idx = rng.permutation(len(dataset))
    n_hold = int(len(dataset) * HOLDOUT_FRAC)
    hold = [dataset[i] for i in idx[:n_hold]]
    fit = [dataset[i] for i in idx[n_hold:]]
    return fit, hold


@pytest.fixture(scope="session")
def trained(cfg, split):
    fit, _ = split
    t0 = time.perf_counter()
    params, models, curve = train(fit, cfg)
    wall = time.perf_counter() - t0
    return params, models, curve, wall


@pytest.fixture(scope="session")
def sweep_results(cfg, trained):
    params, _, _, _ = trained
    env = cfg.copy()
    env.workload.episode_len = 500.0
    return sweep(env, params)


def _mean_cell(results, policy, lam, attr):
    vals = [getattr(m, attr) for m in results if m.policy == policy and m.lam == lam]
    assert vals, f"missing sweep cell {policy}@{lam}"
    return float(np.mean(vals))


# -- criterion: gradient integrity ------------------------------------------------


def _random_batch(rng, n=3):
    recs = []
    for _ in range(n):
        recs.append(TrainingSample(
            episode=0, task_id=0, lam=30.0,
            xt=rng.uniform(0, 3, 6), xc=rng.uniform(0, 3, 6),
            xp=rng.uniform(0, 3, 6), has_prev=int(rng.integers(0, 2)),
            sn_aoi=0.1, sn_occ=0.2, qos=float(rng.uniform(0, 0.2)),
            ap_aoi_norm=float(rng.uniform(0, 1)),
            d_down_norm=float(rng.uniform(0, 0.5)),
            ap_idle=float(rng.integers(0, 3)),
            ap_qfrac=float(rng.uniform(0, 1)),
            ap_resid_norm=float(rng.uniform(0, 1)),
            action=int(rng.integers(0, 2)), from_expert=1,
            t_loc=float(rng.uniform(0, 2)), t_off=float(rng.uniform(0, 2)),
            t_actual=float(rng.uniform(0, 2.5)), tau=1.8,
            y_sn=int(rng.integers(0, 2)), y_ap=int(rng.integers(0, 2)),
            y_success=int(rng.integers(0, 2))))
    return Batch(recs)


def _stack_grad_check(seed, enc_cfg, entries, w):
    models = Models.build(enc_cfg)
    params = models.init_params(seed)
    rng = np.random.default_rng(1000 + seed)
    batch = _random_batch(rng)

    def loss_and_grads():
        total, _ = joint_loss(batch, models, params, w)
        return total

    def loss_only():
        total, _ = joint_loss(batch, models, params, w, backward=False)
        return total

    return grad_check(params, loss_and_grads, loss_only,
                      max_entries_per_tensor=entries,
                      rng=np.random.default_rng(seed))


def test_criterion_gradient_integrity(cfg):
    t0 = time.perf_counter()
    worst = 0.0
    small = EncoderConfig(d_model=8, n_layers=2, n_heads=2, d_ffn=16,
                          d_sem=3, dropout=0.0)
    for seed in range(97):
        worst = max(worst, _stack_grad_check(seed, small, entries=3, w=cfg.loss))
    # a few full-width checks with sparse entry sampling
    for seed in range(3):
        worst = max(worst, _stack_grad_check(seed, cfg.encoder, entries=2,
                                             w=cfg.loss))
    wall = time.perf_counter() - t0
    _report("gradient integrity",
            worst < 1e-4 and wall < 120.0,
            f"max rel err {worst:.2e} over 100 seeds in {wall:.0f}s")


# -- criterion: queueing sanity -----------------------------------------------------


def test_criterion_queueing_sanity(cfg):
    from cfnsync.simulate import Episode
    env = cfg.copy()
    env.workload.lambda_in = 30.0
    env.workload.episode_len = 500.0
    ep = Episode(env, "fixed", "offload_all", seed=1)
    m = ep.run()
    sn = ep.sn
    l_avg = sn.time_avg_queue_len(500.0)
    lam_eff = (sn.submitted - sn.dropped) / 500.0
    w_avg = float(np.mean(sn.waits))
    rel = abs(l_avg - lam_eff * w_avg) / max(l_avg, 1e-12)
    _report("queueing sanity",
            rel <= 0.10 and m.success_rate >= 0.999,
            f"little-law gap {rel:.3%}, success {m.success_rate:.4f}")


# -- criterion: baseline frequencies ---------------------------------------------------


def test_criterion_fixed_frequency(cfg):
    env = cfg.copy()
    env.workload.episode_len = 500.0
    env.workload.lambda_in = 30.0
    m = run_episode(env, "fixed", None, seed=1)
    ok = abs(m.update_freq - 20.0) <= 0.1
    _report("fixed-schedule frequency", ok, f"{m.update_freq:.3f}/s")


def test_criterion_qaoi_budget(cfg):
    env = cfg.copy()
    env.workload.episode_len = 500.0
    env.workload.lambda_in = 60.0
    m = run_episode(env, "qaoi", None, seed=1)
    ok = 45.0 <= m.update_freq <= 50.0
    _report("qaoi budget under overload", ok, f"{m.update_freq:.2f}/s")


# -- criterion: label oracle ---------------------------------------------------------


def test_criterion_label_oracle(cfg):
    rng = np.random.default_rng(7)
    thr = cfg.thresholds
    agree = 0
    for _ in range(1000):
        aoi, occ = float(rng.uniform(0, 1)), float(rng.uniform(0, 1))
        fe, act = int(rng.integers(0, 2)), int(rng.integers(0, 2))
        succ = int(rng.integers(0, 2))
        t_loc, t_off = float(rng.uniform(0, 1)), float(rng.uniform(0, 1))
        want_sn = 1 if (aoi >= thr.tau_max or occ >= thr.delta_warn) else 0
        if fe and succ:
            want_ap = act
        else:
            want_ap = 1 if (occ >= thr.delta_cong
                            or (t_off - t_loc) >= thr.eps_hyst) else 0
        got = (label_update(aoi, occ, thr),
               label_forward(fe, act, succ, occ, t_loc, t_off, thr))
        agree += int(got == (want_sn, want_ap))
    _report("label oracle", agree == 1000, f"{agree}/1000 agree")


# -- criterion: training convergence ---------------------------------------------------


def test_criterion_dataset_size(dataset, split):
    fit, _ = split
    _report("bootstrap dataset size", len(fit) >= 30_000,
            f"{len(fit)} training records ({len(dataset)} total)")


def test_criterion_training_convergence(trained):
    _, _, curve, wall = trained
    ratio = curve[-1] / curve[0]
    _report("training convergence",
            ratio <= 0.5 and wall < 15 * 60,
            f"loss {curve[0]:.3f} -> {curve[-1]:.3f} (ratio {ratio:.3f}) "
            f"in {wall/60:.1f} min")


def test_trained_head_agreement(cfg, split, trained):
    _, hold = split
    params, models, _, _ = trained
    ha = head_agreement(hold, models, params, cfg.loss)
    _report("held-out update-head recall",
            ha["sn_positive_agreement"] >= 0.95,
            f"{ha['sn_positive_agreement']:.3f} on positives")
    _report("held-out forwarder accuracy",
            ha["ap_accuracy"] >= 0.90,
            f"{ha['ap_accuracy']:.3f}")


def test_trained_deviation_monotonicity(cfg, split, trained):
    # larger deviation should not turn an update decision off
    _, hold = split
    params, models, _, _ = trained
    data = Batch(hold[:512])
    z_t, _ = models.encoder.forward(params, data.xt)
    rng = np.random.default_rng(5)
    ok_ctx = 0
    n_ctx = 100
    for i in range(n_ctx):
        row = int(rng.integers(0, z_t.shape[0]))
        qos = data.qos[row]
        devs = np.linspace(0.0, 2.0, 100)
        feats = np.concatenate([
            np.repeat(z_t[row][None, :], 100, axis=0),
            devs[:, None], np.full((100, 1), qos)], axis=1)
        p, _, _ = models.sn_head.forward(params, feats)
        a = (p > 0.5).astype(int)
        if np.all(np.diff(a) >= 0):
            ok_ctx += 1
    _report("update-head deviation monotonicity",
            ok_ctx >= 0.9 * n_ctx, f"{ok_ctx}/{n_ctx} contexts monotone")


# -- criterion: headline trend ----------------------------------------------------------


def test_capacity_arithmetic(cfg):
    cap = service_capacity(cfg)
    _report("configured service capacity", abs(cap - 56.0) < 1e-9,
            f"{cap:g} tasks/s")


def test_content_aware_light_load_rate(sweep_results):
    # reported reference point: ~22.67 updates/s at 15/s arrivals
    uf = _mean_cell(sweep_results, "content", 15.0, "update_freq")
    _report("content-aware light-load rate", 18.0 <= uf <= 28.0,
            f"{uf:.2f}/s")


def test_criterion_headline_trend(cfg, sweep_results):
    res = sweep_results
    lambdas = cfg.sweep.lambdas
    baselines = [p for p in cfg.sweep.policies if p != "semantic"]

    low = {lam: _mean_cell(res, "semantic", lam, "success_rate")
           for lam in lambdas if lam <= 50}
    ok_a = all(v >= 0.99 for v in low.values())
    _report("headline (a) success at moderate load", ok_a,
            " ".join(f"{lam:g}:{v:.4f}" for lam, v in sorted(low.items())))

    sem55 = _mean_cell(res, "semantic", 55.0, "success_rate")
    base55 = {p: _mean_cell(res, p, 55.0, "success_rate") for p in baselines}
    ok_b = sem55 >= 0.95 and all(sem55 > v for v in base55.values())
    _report("headline (b) saturation advantage", ok_b,
            f"semantic {sem55:.4f} vs " +
            " ".join(f"{p}:{v:.4f}" for p, v in base55.items()))

    freqs = {lam: _mean_cell(res, "semantic", lam, "update_freq")
             for lam in lambdas}
    ok_c = all(freqs[lam] < lam for lam in lambdas)
    _report("headline (c) updates below arrival rate", ok_c,
            " ".join(f"{lam:g}:{v:.2f}" for lam, v in sorted(freqs.items())))

    ok_d = freqs[15.0] <= 5.0
    _report("headline (d) sparse updates at light load", ok_d,
            f"{freqs[15.0]:.2f}/s at 15/s arrivals")


# -- criterion: ablation trend ------------------------------------------------------------


def test_criterion_ablation_trend(cfg, split, trained):
    fit, _ = split
    params3, _, _, _ = trained
    params1, _, _ = train(fit, cfg, d_sem=1)

    def mean_success(params, d_sem):
        env = cfg.copy()
        env.workload.lambda_in = 50.0
        env.workload.episode_len = 500.0
        env.encoder.d_sem = d_sem
        vals = []
        for seed in (1, 2, 3):
            m = run_episode(env, "semantic", "learned", seed, params=params)
            vals.append(m.success_rate)
        return float(np.mean(vals))

    s3 = mean_success(params3, 3)
    s1 = mean_success(params1, 1)
    _report("ablation trend", s1 <= s3 - 0.1,
            f"width-1 {s1:.4f} vs width-3 {s3:.4f}")


# -- criterion: interval non-degeneracy ----------------------------------------------------


def test_criterion_interval_spread(sweep_results):
    def intervals(lam):
        runs = [m for m in sweep_results if m.policy == "semantic" and m.lam == lam]
        out = []
        for m in runs:
            out.extend(m.update_intervals)
        return out

    i20, i60 = intervals(20.0), intervals(60.0)
    hist20 = interval_histogram(i20)
    nonempty = sum(1 for _, _, c in hist20 if c > 0)
    med20, med60 = float(np.median(i20)), float(np.median(i60))
    _report("interval non-degeneracy",
            nonempty >= 5 and med60 < med20,
            f"{nonempty} nonempty bins at 20/s; median {med60:.3f}s@60 "
            f"vs {med20:.3f}s@20")


# -- criterion: determinism -----------------------------------------------------------------


def test_criterion_determinism(cfg, trained, tmp_path):
    from cfnsync.harness import export
    params, _, _, _ = trained
    env = cfg.copy()
    env.workload.lambda_in = 40.0
    env.workload.episode_len = 100.0
    a = run_episode(env, "semantic", "learned", seed=9, params=params)
    b = run_episode(env, "semantic", "learned", seed=9, params=params)
    export([a], str(tmp_path / "a"), env)
    export([b], str(tmp_path / "b"), env)
    same_csv = ((tmp_path / "a" / "results.csv").read_bytes()
                == (tmp_path / "b" / "results.csv").read_bytes())
    _report("determinism", a == b and same_csv,
            "bit-identical metrics and exported rows")
