import numpy as np
import pytest

from cfnsync.config import CalibrationThresholds, load_config
from cfnsync.encoder import EncoderConfig
from cfnsync.nn import grad_check
from cfnsync.training import (Batch, Models, TrainingSample, collect_traces,
                              head_agreement, joint_loss, label_dataset,
                              label_forward, label_update, load_dataset,
                              save_dataset, train)


def _thr():
    return CalibrationThresholds()


# -- label calibration ------------------------------------------------------------


def test_label_update_age_clause():
    assert label_update(0.6, 0.1, _thr()) == 1


def test_label_update_congestion_clause():
    assert label_update(0.1, 0.6, _thr()) == 1


def test_label_update_both_below():
    assert label_update(0.49, 0.49, _thr()) == 0


def test_label_update_inclusive_boundaries():
    assert label_update(0.5, 0.0, _thr()) == 1
    assert label_update(0.0, 0.5, _thr()) == 1


def test_label_update_rejects_bad_occupancy():
    with pytest.raises(ValueError):
        label_update(0.1, 1.5, _thr())


def test_label_forward_clones_successful_expert():
    assert label_forward(1, 0, 1, 0.9, 5.0, 0.0, _thr()) == 0
    assert label_forward(1, 1, 1, 0.0, 5.0, 0.0, _thr()) == 1


def test_label_forward_failed_demonstration_falls_to_calibration():
    # failed expert offload at a saturated queue: breaker takes over
    assert label_forward(1, 0, 0, 0.9, 5.0, 0.0, _thr()) == 1
    # failed expert local with remote clearly better: hysteresis keeps offload
    assert label_forward(1, 1, 0, 0.1, 5.0, 0.0, _thr()) == 0


def test_label_forward_circuit_breaker():
    assert label_forward(0, 0, 1, 0.55, 0.1, 0.1, _thr()) == 1


def test_label_forward_hysteresis_margin():
    thr = _thr()
    assert label_forward(0, 0, 1, 0.1, 0.30, 0.34, thr) == 0  # gap 0.04 < 0.05
    assert label_forward(0, 0, 1, 0.1, 0.0, 0.05, thr) == 1   # gap exactly at margin
    assert label_forward(0, 0, 1, 0.1, 0.30, 0.36, thr) == 1  # gap 0.06 above margin


def test_labels_match_bruteforce_on_crafted_trace():
    # independent predicate oracle over a 1000-record synthetic trace
    rng = np.random.default_rng(42)
    thr = _thr()
    agree = 0
    for _ in range(1000):
        aoi = float(rng.uniform(0, 1.0))
        occ = float(rng.uniform(0, 1.0))
        fe = int(rng.integers(0, 2))
        act = int(rng.integers(0, 2))
        succ = int(rng.integers(0, 2))
        t_loc = float(rng.uniform(0, 1.0))
        t_off = float(rng.uniform(0, 1.0))

        want_sn = 1 if (aoi >= 0.5 or occ >= 0.5) else 0
        if fe and succ:
            want_ap = act
        elif occ >= 0.5:
            want_ap = 1
        elif (t_off - t_loc) >= 0.05:
            want_ap = 1
        else:
            want_ap = 0

        got_sn = label_update(aoi, occ, thr)
        got_ap = label_forward(fe, act, succ, occ, t_loc, t_off, thr)
        agree += int(got_sn == want_sn and got_ap == want_ap)
    assert agree == 1000


# -- trace collection ---------------------------------------------------------------


def _small_collect(cfg, lambdas=(30.0,), episode_len=20.0, epsilon=0.1,
                   schedules=("always",)):
    cfg.collect.lambdas = list(lambdas)
    cfg.collect.episode_len = episode_len
    cfg.collect.epsilon = epsilon
    cfg.collect.schedules = list(schedules)
    return label_dataset(collect_traces(cfg), cfg.thresholds)


def test_collect_record_count_tracks_poisson_mean():
    cfg = load_config()
    samples = _small_collect(cfg, lambdas=(30.0,), episode_len=100.0)
    mean = 30.0 * 100.0
    sigma = np.sqrt(mean)
    # in-flight tasks at the horizon are dropped from the log
    assert mean - 3 * sigma - 50 <= len(samples) <= mean + 3 * sigma


def test_collect_epsilon_zero_all_expert():
    cfg = load_config()
    samples = _small_collect(cfg, episode_len=10.0, epsilon=0.0)
    assert all(s.from_expert == 1 for s in samples)


def test_collect_epsilon_flips_marked():
    # exploration arrives in sustained windows; fraction approaches epsilon
    # over enough windows
    cfg = load_config()
    samples = _small_collect(cfg, episode_len=300.0, epsilon=0.3)
    frac = np.mean([1 - s.from_expert for s in samples])
    assert 0.15 < frac < 0.45


def test_collect_records_satisfy_invariants():
    cfg = load_config()
    samples = _small_collect(cfg, lambdas=(40.0,), episode_len=30.0,
                             schedules=("periodic:0.5",))
    assert len(samples) > 500
    for s in samples:
        assert s.t_actual == (s.t_loc if s.action == 1 else s.t_off)
        assert s.tau == 1.8
        assert 0.0 <= s.sn_occ <= 1.0
        assert s.sn_aoi >= 0.0
        assert s.xt.shape == (6,) and s.xc.shape == (6,) and s.xp.shape == (6,)
        assert np.all(s.xt >= 0) and np.all(s.xt <= 10.0)
        assert s.y_sn in (0, 1) and s.y_ap in (0, 1) and s.y_success in (0, 1)
    assert any(s.has_prev for s in samples)


def test_collect_stale_schedules_cover_age_range():
    cfg = load_config()
    samples = _small_collect(cfg, lambdas=(20.0,), episode_len=60.0,
                             schedules=("periodic:1.0",))
    ages = np.array([s.sn_aoi for s in samples])
    assert ages.max() > 0.5
    assert (np.array([s.y_sn for s in samples]) == 1).any()


def test_dataset_roundtrip(tmp_path):
    cfg = load_config()
    samples = _small_collect(cfg, episode_len=10.0)
    path = tmp_path / "data.csv"
    save_dataset(samples, str(path))
    loaded = load_dataset(str(path))
    assert len(loaded) == len(samples)
    for a, b in zip(samples, loaded):
        assert np.array_equal(a.xt, b.xt)
        assert np.array_equal(a.xp, b.xp)
        assert a.t_loc == b.t_loc and a.y_ap == b.y_ap
        assert a.from_expert == b.from_expert


# -- joint loss ------------------------------------------------------------------------


def _record(**kw):
    base = dict(episode=0, task_id=0, lam=30.0, xt=np.full(6, 0.5),
                xc=np.full(6, 0.4), xp=np.full(6, 0.5), has_prev=1,
                sn_aoi=0.1, sn_occ=0.1, qos=0.05, ap_aoi_norm=0.1,
                d_down_norm=0.1, ap_idle=2.0, ap_qfrac=0.0,
                ap_resid_norm=0.0, action=0, from_expert=1, t_loc=0.3,
                t_off=0.4, t_actual=0.4, tau=1.8, y_sn=0, y_ap=0, y_success=1)
    base.update(kw)
    return TrainingSample(**base)


def _tiny_models(seed=0, d_sem=3):
    enc_cfg = EncoderConfig(d_model=8, n_layers=2, n_heads=2, d_ffn=16,
                            d_sem=d_sem, dropout=0.0)
    models = Models.build(enc_cfg)
    return models, models.init_params(seed)


def test_joint_loss_rejects_empty_batch():
    with pytest.raises(ValueError):
        Batch([])


def test_joint_loss_rejects_unlabeled():
    rec = _record(y_sn=-1)
    with pytest.raises(ValueError):
        Batch([rec])


def test_forward_cost_term_weighting():
    # p_loc is exactly 0.5 for a zeroed output layer: term = 0.5*Tl + 0.5*To
    cfg = load_config()
    w = cfg.loss
    for f in ("lambda_r", "lambda_ap", "lambda_sem", "lambda_inf",
              "lambda_c", "lambda_lat"):
        setattr(w, f, 0.0)
    w.lambda_f = 1.0
    models, params = _tiny_models()
    params.values["ap.l2.w"][:] = 0.0
    params.values["ap.l2.b"][:] = 0.0
    rec = _record(t_loc=0.2 * 1.8, t_off=0.4 * 1.8)
    total, parts = joint_loss(Batch([rec]), models, params, w, backward=False)
    assert total == pytest.approx(0.3)


def test_delay_penalty_term_value():
    cfg = load_config()
    w = cfg.loss
    for f in ("lambda_r", "lambda_ap", "lambda_sem", "lambda_inf",
              "lambda_c", "lambda_f"):
        setattr(w, f, 0.0)
    w.lambda_lat = 1.0
    models, params = _tiny_models()
    rec = _record(t_actual=2.0, tau=1.8)
    total, _ = joint_loss(Batch([rec]), models, params, w, backward=False)
    assert total == pytest.approx(0.2 / 1.8, rel=1e-6)


def test_loss_floor_is_update_rate_term():
    # perfect labels at the saturation limits leave only the rate penalty,
    # which vanishes as the update probability goes to zero
    cfg = load_config()
    w = cfg.loss
    w.lambda_sem = 0.0
    w.lambda_lat = 0.0
    w.lambda_f = 0.0
    w.lambda_inf = 0.0
    models, params = _tiny_models()
    params.values["sn.l2.w"][:] = 0.0
    params.values["sn.l2.b"][:] = -40.0  # p_up ~ 0
    params.values["ap.l2.w"][:] = 0.0
    params.values["ap.l2.b"][:] = -40.0  # p_loc ~ 0
    rec = _record(y_sn=0, y_ap=0, y_success=0, t_loc=0.0, t_off=0.0, t_actual=0.0)
    total, parts = joint_loss(Batch([rec]), models, params, w, backward=False)
    assert total < 1e-10
    assert parts["comm"] == pytest.approx(w.lambda_c * 0.0, abs=1e-12)


def test_joint_loss_nonnegative():
    cfg = load_config()
    rng = np.random.default_rng(0)
    models, params = _tiny_models(seed=4)
    recs = [_record(xt=rng.uniform(0, 2, 6), xc=rng.uniform(0, 2, 6),
                    y_sn=int(rng.integers(0, 2)), y_ap=int(rng.integers(0, 2)),
                    y_success=int(rng.integers(0, 2))) for _ in range(16)]
    total, parts = joint_loss(Batch(recs), models, params, cfg.loss, backward=False)
    assert total >= 0
    assert all(v >= 0 for v in parts.values())


def test_joint_loss_gradients_match_finite_differences():
    cfg = load_config()
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(10):
        models, params = _tiny_models(seed=10 + trial)
        recs = []
        for i in range(4):
            recs.append(_record(
                xt=rng.uniform(0, 2, 6), xc=rng.uniform(0, 2, 6),
                xp=rng.uniform(0, 2, 6), has_prev=int(rng.integers(0, 2)),
                qos=float(rng.uniform(0, 0.2)),
                ap_aoi_norm=float(rng.uniform(0, 1)),
                d_down_norm=float(rng.uniform(0, 0.5)),
                ap_idle=float(rng.integers(0, 3)),
                ap_qfrac=float(rng.uniform(0, 1)),
                ap_resid_norm=float(rng.uniform(0, 1)),
                t_loc=float(rng.uniform(0, 2)), t_off=float(rng.uniform(0, 2)),
                t_actual=float(rng.uniform(0, 2.5)),
                y_sn=int(rng.integers(0, 2)), y_ap=int(rng.integers(0, 2)),
                y_success=int(rng.integers(0, 2))))
        batch = Batch(recs)

        def loss_and_grads():
            total, _ = joint_loss(batch, models, params, cfg.loss)
            return total

        def loss_only():
            total, _ = joint_loss(batch, models, params, cfg.loss, backward=False)
            return total

        err = grad_check(params, loss_and_grads, loss_only,
                         max_entries_per_tensor=4,
                         rng=np.random.default_rng(trial))
        worst = max(worst, err)
    assert worst < 1e-4


# -- training loop -------------------------------------------------------------------


def _tiny_dataset(n=300, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        occ = float(rng.uniform(0, 1))
        aoi = float(rng.uniform(0, 1))
        recs.append(_record(
            xt=rng.uniform(0, 2, 6), xc=rng.uniform(0, 2, 6),
            xp=rng.uniform(0, 2, 6), sn_aoi=aoi, sn_occ=occ,
            y_sn=int(aoi >= 0.5 or occ >= 0.5),
            y_ap=int(rng.integers(0, 2)), y_success=int(rng.integers(0, 2))))
    return recs


def test_train_zero_lr_keeps_parameters_and_flat_curve():
    cfg = load_config()
    cfg.adam.lr = 0.0
    cfg.train.epochs = 3
    cfg.encoder.d_model = 8
    cfg.encoder.d_ffn = 16
    cfg.encoder.n_heads = 2
    cfg.encoder.dropout = 0.0  # the only remaining epoch-to-epoch noise source
    recs = _tiny_dataset(n=256)  # one full batch: every epoch sees all samples
    params, models, curve = train(recs, cfg)
    fresh = Models.build(models.encoder.cfg).init_params(cfg.train.seed)
    for k in fresh.values:
        assert np.array_equal(params.values[k], fresh.values[k])
    assert max(curve) - min(curve) < 1e-9


def test_train_deterministic_given_seed():
    cfg = load_config()
    cfg.train.epochs = 2
    cfg.encoder.d_model = 8
    cfg.encoder.d_ffn = 16
    cfg.encoder.n_heads = 2
    recs = _tiny_dataset()
    _, _, c1 = train(recs, cfg)
    _, _, c2 = train(recs, cfg)
    assert c1 == c2


def test_train_small_dataset_full_batch_fallback():
    cfg = load_config()
    cfg.train.epochs = 2
    cfg.train.batch_size = 256
    cfg.encoder.d_model = 8
    cfg.encoder.d_ffn = 16
    cfg.encoder.n_heads = 2
    recs = _tiny_dataset(n=50)
    params, _, curve = train(recs, cfg)
    assert len(curve) == 2


def test_head_agreement_reports_fields():
    cfg = load_config()
    cfg.train.epochs = 2
    cfg.encoder.d_model = 8
    cfg.encoder.d_ffn = 16
    cfg.encoder.n_heads = 2
    recs = _tiny_dataset()
    params, models, _ = train(recs, cfg)
    ha = head_agreement(recs, models, params, cfg.loss)
    assert set(ha) >= {"sn_accuracy", "sn_positive_agreement", "ap_accuracy", "n"}
    assert ha["n"] == len(recs)
