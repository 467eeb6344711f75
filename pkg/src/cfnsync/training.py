"""Offline joint training: trace collection with an expert behavior policy,
hybrid label calibration, the differentiable joint objective, and the
centralized minibatch loop."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .config import CalibrationThresholds, LossWeights, RunConfig
from .encoder import (EncoderConfig, SemanticEncoder, deviation_bwd,
                      deviation_fwd, smoothness_penalty)
from .nn import AdamConfig, Params
from .nn.ops import bce_logits_fwd, sigmoid_fwd
from .policies import PolicyHead
from .simulate import Episode
from .workload import Decision, Outcome

DELAY_EPS = 1e-8
# realized latency assigned to tasks dropped at a full queue: a clear,
# bounded deadline violation (twice the deadline)
OVERFLOW_LATENCY_FACTOR = 2.0
# seconds per sustained exploration window during trace collection
EXPLORE_WINDOW_LEN = 2.0


@dataclass
class TrainingSample:
    """One calibrated record, anchored at a task decision.

    State vectors are normalized six-feature snapshots: xt the current
    service-node state, xc the state behind the cache the forwarder saw,
    xp the previous decision-slot state (smoothness pairs). Exactly one of
    t_loc/t_off is the realized latency of the taken branch; the other is
    the decision-time estimate.
    """
    episode: int
    task_id: int
    lam: float
    xt: np.ndarray
    xc: np.ndarray
    xp: np.ndarray
    has_prev: int
    sn_aoi: float
    sn_occ: float
    qos: float
    ap_aoi_norm: float
    d_down_norm: float
    ap_idle: float
    ap_qfrac: float
    ap_resid_norm: float
    action: int
    from_expert: int
    t_loc: float
    t_off: float
    t_actual: float
    tau: float
    y_sn: int = -1
    y_ap: int = -1
    y_success: int = -1


# -- label calibration ----------------------------------------------------------


def label_update(aoi: float, q_occupancy: float,
                 thr: CalibrationThresholds) -> int:
    """Update when the acknowledged age or the queue occupancy reaches its
    limit (both comparisons inclusive)."""
    if not 0.0 <= q_occupancy <= 1.0:
        raise ValueError("occupancy must lie in [0, 1]")
    return int(aoi >= thr.tau_max or q_occupancy >= thr.delta_warn)


def label_forward(from_expert: int, action: int, y_success: int, sn_occ: float,
                  t_loc: float, t_off: float, thr: CalibrationThresholds) -> int:
    """Clone the expert where a usable demonstration exists; otherwise force
    local on the congestion circuit breaker or when the remote cost exceeds
    local by the hysteresis margin.

    A demonstration is usable only if the task succeeded: cloning failed
    expert decisions would imitate exactly the saturation behavior the
    calibration bounds are there to override.
    """
    if from_expert and y_success:
        return int(action)
    if sn_occ >= thr.delta_cong or (t_off - t_loc) >= thr.eps_hyst:
        return 1
    return 0


def label_dataset(samples: list[TrainingSample],
                  thr: CalibrationThresholds) -> list[TrainingSample]:
    for s in samples:
        s.y_sn = label_update(s.sn_aoi, s.sn_occ, thr)
        s.y_ap = label_forward(s.from_expert, s.action, s.y_success, s.sn_occ,
                               s.t_loc, s.t_off, thr)
    return samples


# -- trace collection -------------------------------------------------------------


def _collect_episode(cfg: RunConfig, lam: float, schedule: str, seed: int,
                     episode_idx: int) -> list[TrainingSample]:
    env = cfg.copy()
    env.workload.lambda_in = lam
    env.workload.episode_len = cfg.collect.episode_len
    ep = Episode(env, schedule, "expert", seed)
    norm = ep.normalizer
    deadline = env.workload.deadline
    eps = cfg.collect.epsilon

    samples: list[TrainingSample] = []
    pending: dict[int, TrainingSample] = {}
    slots: list[tuple] = []  # ring of the last two slot snapshots

    def on_slot(k, t, raw, z):
        snap = (norm.apply(raw.as_array()), raw.x4_aoi, ep.sn.occupancy(),
                ep.qos_estimate())
        slots.append(snap)
        if len(slots) > 2:
            slots.pop(0)

    flipped_ids: set[int] = set()
    # Exploration comes in sustained windows rather than isolated flips:
    # deep off-expert states (a backed-up local queue, a flooded remote
    # queue) only arise when deviations persist, and those states are the
    # ones the calibration labels are for. Window starts form a Poisson
    # process with rate eps/len, so the flipped fraction stays ~eps.
    window_len = EXPLORE_WINDOW_LEN
    # duty cycle eps: mean gap between windows is len*(1-eps)/eps
    state = {"until": -1.0, "next": 0.0}
    if eps > 0:
        gap_mean = window_len * (1.0 - eps) / eps
        state["next"] = float(ep.rng.explore.exponential(gap_mean))

    def ap_override(task, t, decision, view):
        if eps <= 0:
            return decision
        if t >= state["next"] and t >= state["until"]:
            state["until"] = t + window_len
            state["next"] = t + window_len + float(
                ep.rng.explore.exponential(gap_mean))
        if t < state["until"]:
            flipped_ids.add(task.id)
            return Decision.OFFLOAD if decision == Decision.LOCAL else Decision.LOCAL
        return decision

    def on_task_decided(task, t, view):
        if slots:
            cur = slots[-1]
            prev = slots[-2] if len(slots) > 1 else None
        else:  # arrival before the first decision slot
            raw = ep.sn_raw_state(t)
            cur = (norm.apply(raw.as_array()), raw.x4_aoi, ep.sn.occupancy(),
                   ep.qos_estimate())
            prev = None
        clip = norm.clip_scalar
        pending[task.id] = TrainingSample(
            episode=episode_idx, task_id=task.id, lam=lam,
            xt=cur[0], xc=norm.apply(ep.cache_raw.as_array()),
            xp=prev[0] if prev is not None else np.zeros(6),
            has_prev=int(prev is not None),
            sn_aoi=cur[1], sn_occ=cur[2], qos=cur[3],
            ap_aoi_norm=clip(ep.tracker.receiver_aoi(t) / deadline),
            d_down_norm=clip(ep.downlink_estimate(task.bits) / deadline),
            ap_idle=float(ep.ap.idle_cores()),
            ap_qfrac=ep.ap.occupancy(),
            ap_resid_norm=clip(ep.ap.residual_queue_time(t) / deadline),
            action=int(task.decision == Decision.LOCAL),
            from_expert=int(task.id not in flipped_ids),
            t_loc=view.t_loc_est, t_off=view.t_off_est,
            t_actual=0.0, tau=task.deadline,
        )

    def on_task_done(task):
        rec = pending.pop(task.id, None)
        if rec is None:
            return
        if task.t_complete is None:  # dropped at a full queue
            latency = OVERFLOW_LATENCY_FACTOR * task.deadline
        else:
            latency = task.latency
        if rec.action == 1:
            rec.t_loc = latency
        else:
            rec.t_off = latency
        rec.t_actual = latency
        rec.y_success = int(task.outcome == Outcome.SUCCESS)
        samples.append(rec)

    ep.on_slot = on_slot
    ep.ap_override = ap_override
    ep.on_task_decided = on_task_decided
    ep.on_task_done = on_task_done
    ep.run()
    return samples


def collect_traces(cfg: RunConfig, progress: bool = False) -> list[TrainingSample]:
    """Expert-driven episodes with exploration flips, cycling the update
    schedule mix so cache staleness and age cover their deployed ranges."""
    out: list[TrainingSample] = []
    schedules = cfg.collect.schedules
    i = 0
    for lam in cfg.collect.lambdas:
        for _ in range(cfg.collect.episodes_per_lambda):
            sched = schedules[i % len(schedules)]
            recs = _collect_episode(cfg, float(lam), sched, cfg.collect.seed + i, i)
            out.extend(recs)
            if progress:
                print(f"  collected lam={lam} schedule={sched}: {len(recs)} records")
            i += 1
    return out


# -- dataset packing / persistence ---------------------------------------------------

_SCALAR_COLS = ("episode", "task_id", "lam", "has_prev", "sn_aoi", "sn_occ",
                "qos", "ap_aoi_norm", "d_down_norm", "ap_idle", "ap_qfrac",
                "ap_resid_norm", "action", "from_expert", "t_loc", "t_off",
                "t_actual", "tau", "y_sn", "y_ap", "y_success")
_INT_COLS = {"episode", "task_id", "has_prev", "action", "from_expert",
             "y_sn", "y_ap", "y_success"}


def dataset_columns() -> list[str]:
    cols = []
    for v in ("xt", "xc", "xp"):
        cols += [f"{v}{i}" for i in range(6)]
    return cols + list(_SCALAR_COLS)


def save_dataset(samples: list[TrainingSample], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(dataset_columns())
        for s in samples:
            row = [repr(float(v)) for v in np.concatenate([s.xt, s.xc, s.xp])]
            for c in _SCALAR_COLS:
                v = getattr(s, c)
                row.append(str(int(v)) if c in _INT_COLS else repr(float(v)))
            w.writerow(row)


def load_dataset(path: str) -> list[TrainingSample]:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if header != dataset_columns():
            raise ValueError(f"{path}: unexpected dataset columns")
        out = []
        for row in r:
            vals = [float(v) for v in row]
            kw = {}
            for j, v in enumerate(("xt", "xc", "xp")):
                kw[v] = np.array(vals[6 * j:6 * j + 6])
            for j, c in enumerate(_SCALAR_COLS):
                v = vals[18 + j]
                kw[c] = int(v) if c in _INT_COLS else v
            out.append(TrainingSample(**kw))
        return out


class Batch:
    """Column-packed view of a sample list for vectorized passes."""

    def __init__(self, samples: list[TrainingSample]):
        if not samples:
            raise ValueError("empty batch")
        n = len(samples)
        self.n = n
        self.xt = np.stack([s.xt for s in samples])[:, None, :]
        self.xc = np.stack([s.xc for s in samples])[:, None, :]
        self.xp = np.stack([s.xp for s in samples])[:, None, :]
        self.has_prev = np.array([s.has_prev for s in samples], dtype=bool)
        for name in ("qos", "ap_aoi_norm", "d_down_norm", "ap_idle", "ap_qfrac",
                     "ap_resid_norm", "t_loc", "t_off", "t_actual", "tau"):
            setattr(self, name, np.array([getattr(s, name) for s in samples]))
        for name in ("y_sn", "y_ap", "y_success"):
            v = np.array([getattr(s, name) for s in samples], dtype=np.float64)
            if np.any(v < 0):
                raise ValueError("batch holds unlabeled samples")
            setattr(self, name, v)

    def select(self, idx: np.ndarray) -> "Batch":
        b = object.__new__(Batch)
        b.n = len(idx)
        for k, v in self.__dict__.items():
            if isinstance(v, np.ndarray):
                setattr(b, k, v[idx])
        return b


@dataclass
class Models:
    encoder: SemanticEncoder
    sn_head: PolicyHead
    ap_head: PolicyHead

    @classmethod
    def build(cls, enc_cfg: EncoderConfig) -> "Models":
        d = enc_cfg.d_sem
        return cls(SemanticEncoder(enc_cfg), PolicyHead("sn.", d + 2),
                   PolicyHead("ap.", d + 5))

    def init_params(self, seed: int) -> Params:
        rng = np.random.default_rng(seed)
        params = Params()
        self.encoder.init_params(params, rng)
        self.sn_head.init_params(params, rng)
        self.ap_head.init_params(params, rng)
        return params


def joint_loss(batch: Batch, models: Models, params: Params, w: LossWeights,
               train: bool = False, rng: Optional[np.random.Generator] = None,
               backward: bool = True):
    """Imitation + system-cost + smoothness objective; fills params.grads
    when backward is requested. Returns (total, parts)."""
    n = batch.n
    enc = models.encoder

    # One dropout-thinned encoder per step: the three passes share masks, so
    # the deviation feature and the smoothness pairs compare states through
    # the same subnetwork instead of measuring mask noise.
    if train and rng is not None:
        mask_seed = int(rng.integers(0, 2 ** 63 - 1))
        pass_rng = lambda: np.random.Generator(np.random.PCG64(mask_seed))
    else:
        pass_rng = lambda: rng

    z_t, cache_t = enc.forward(params, batch.xt, train=train, rng=pass_rng())
    z_c, cache_c = enc.forward(params, batch.xc, train=train, rng=pass_rng())
    prev_idx = np.flatnonzero(batch.has_prev)
    z_p = cache_p = None
    if prev_idx.size:
        # full-batch pass keeps mask shapes aligned; invalid rows are
        # dropped from the consistency term below
        z_p_full, cache_p = enc.forward(params, batch.xp, train=train,
                                        rng=pass_rng())
        z_p = z_p_full[prev_idx]

    dev, dev_cache = deviation_fwd(z_t, z_c)
    sn_in = np.concatenate([z_t, dev[:, None], batch.qos[:, None]], axis=1)
    p_up, logit_up, sn_caches = models.sn_head.forward(params, sn_in)

    ap_in = np.concatenate([
        z_c, batch.ap_aoi_norm[:, None], batch.d_down_norm[:, None],
        batch.ap_idle[:, None], batch.ap_qfrac[:, None],
        batch.ap_resid_norm[:, None]], axis=1)
    p_loc, logit_loc, ap_caches = models.ap_head.forward(params, ap_in)

    tl = batch.t_loc / batch.tau
    to = batch.t_off / batch.tau

    bce_up, _ = bce_logits_fwd(logit_up, batch.y_sn)
    bce_ap, _ = bce_logits_fwd(logit_loc, batch.y_ap)
    bce_succ, _ = bce_logits_fwd(logit_loc, batch.y_success)
    parts = {
        "imit_sn": w.lambda_r * bce_up.mean(),
        "imit_ap": w.lambda_ap * bce_ap.mean(),
        "succ": w.lambda_inf * bce_succ.mean(),
        "comm": w.lambda_c * p_up.mean(),
        "forward": w.lambda_f * (p_loc * tl + (1.0 - p_loc) * to).mean(),
        "delay": w.lambda_lat * (np.maximum(batch.t_actual - batch.tau, 0.0)
                                  / (batch.tau + DELAY_EPS)).mean(),
    }
    if prev_idx.size:
        parts["cons"] = w.lambda_sem * float(
            smoothness_penalty(z_t[prev_idx], z_p).mean())
    else:
        parts["cons"] = 0.0
    total = float(sum(parts.values()))

    if not backward:
        return total, parts

    sig_up = p_up * (1.0 - p_up)
    g_logit_up = (w.lambda_r * (p_up - batch.y_sn) + w.lambda_c * sig_up) / n
    sig_loc = p_loc * (1.0 - p_loc)
    g_logit_loc = (w.lambda_ap * (p_loc - batch.y_ap)
                   + w.lambda_inf * (p_loc - batch.y_success)
                   + w.lambda_f * (tl - to) * sig_loc) / n

    g_sn_in = models.sn_head.backward(params, g_logit_up, sn_caches)
    g_ap_in = models.ap_head.backward(params, g_logit_loc, ap_caches)

    d = z_t.shape[1]
    gz_t = g_sn_in[:, :d].copy()
    g_dev = g_sn_in[:, d]
    gdz, gdzc = deviation_bwd(g_dev, dev_cache)
    gz_t += gdz
    gz_c = g_ap_in[:, :d] + gdzc

    if prev_idx.size:
        dz = z_t[prev_idx] - z_p
        g_cons = (2.0 * w.lambda_sem / prev_idx.size) * dz
        gz_t[prev_idx] += g_cons
        gz_p_full = np.zeros_like(z_t)
        gz_p_full[prev_idx] = -g_cons
        enc.backward(params, gz_p_full, cache_p)
    enc.backward(params, gz_t, cache_t)
    enc.backward(params, gz_c, cache_c)
    return total, parts


def train(samples: list[TrainingSample], cfg: RunConfig,
          d_sem: Optional[int] = None, progress: bool = False):
    """Shuffled minibatch epochs over the labeled dataset.

    Returns (params, models, per-epoch mean-loss curve). Datasets smaller
    than one batch fall back to full-set steps.
    """
    enc_cfg = EncoderConfig(**{f.name: getattr(cfg.encoder, f.name)
                               for f in fields(EncoderConfig)})
    if d_sem is not None:
        enc_cfg.d_sem = d_sem
    if enc_cfg.window != 1:
        raise ValueError("training records hold single-slot states (window=1)")
    models = Models.build(enc_cfg)
    params = models.init_params(cfg.train.seed)
    rng = np.random.default_rng(cfg.train.seed + 1)

    data = Batch(samples)
    n = data.n
    bs = min(cfg.train.batch_size, n)
    curve = []
    for epoch in range(cfg.train.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n - bs + 1, bs):
            idx = perm[start:start + bs]
            params.zero_grads()
            loss, _ = joint_loss(data.select(idx), models, params, cfg.loss,
                                 train=True, rng=rng)
            params.adam_step(cfg.adam)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
        if progress:
            print(f"  epoch {epoch + 1:3d}/{cfg.train.epochs}: loss {curve[-1]:.4f}")
    return params, models, curve


def head_agreement(samples: list[TrainingSample], models: Models,
                   params: Params, w: LossWeights) -> dict:
    """Eval-mode agreement of the trained heads with their labels."""
    data = Batch(samples)
    _, parts = joint_loss(data, models, params, w, train=False, backward=False)
    enc = models.encoder
    z_t, _ = enc.forward(params, data.xt)
    z_c, _ = enc.forward(params, data.xc)
    dev, _ = deviation_fwd(z_t, z_c)
    sn_in = np.concatenate([z_t, dev[:, None], data.qos[:, None]], axis=1)
    p_up, _, _ = models.sn_head.forward(params, sn_in)
    ap_in = np.concatenate([
        z_c, data.ap_aoi_norm[:, None], data.d_down_norm[:, None],
        data.ap_idle[:, None], data.ap_qfrac[:, None],
        data.ap_resid_norm[:, None]], axis=1)
    p_loc, _, _ = models.ap_head.forward(params, ap_in)
    a_sn = (p_up > 0.5).astype(int)
    a_ap = (p_loc > 0.5).astype(int)
    pos = data.y_sn == 1
    return {
        "loss": parts,
        "sn_accuracy": float((a_sn == data.y_sn).mean()),
        "sn_positive_agreement": float((a_sn[pos] == 1).mean()) if pos.any() else 1.0,
        "ap_accuracy": float((a_ap == data.y_ap).mean()),
        "n": data.n,
    }
