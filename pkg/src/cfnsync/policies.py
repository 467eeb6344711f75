"""Decision makers: learned update/forwarding heads, the rule-based trigger,
the three baseline update schedules, and the latency-estimator expert."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nn import Params, xavier_uniform
from .nn import ops
from .server import RawState, ServerConfig
from .workload import Decision


class PolicyHead:
    """Two 64-unit GELU hidden layers and a sigmoid scalar output."""

    def __init__(self, prefix: str, d_in: int, hidden: int = 64):
        self.prefix = prefix
        self.d_in = d_in
        self.hidden = hidden

    def init_params(self, params: Params, rng: np.random.Generator) -> None:
        dims = [self.d_in, self.hidden, self.hidden, 1]
        for i in range(3):
            params.add(f"{self.prefix}l{i}.w", xavier_uniform((dims[i], dims[i + 1]), rng))
            params.add(f"{self.prefix}l{i}.b", np.zeros(dims[i + 1]))

    def forward(self, params: Params, s: np.ndarray):
        """s: (batch, d_in) -> probabilities (batch,), logits, caches."""
        if s.ndim == 1:
            s = s[None, :]
        g = params.values
        h, c0 = ops.linear_fwd(s, g[f"{self.prefix}l0.w"], g[f"{self.prefix}l0.b"])
        a0, cg0 = ops.gelu_fwd(h)
        h, c1 = ops.linear_fwd(a0, g[f"{self.prefix}l1.w"], g[f"{self.prefix}l1.b"])
        a1, cg1 = ops.gelu_fwd(h)
        logit, c2 = ops.linear_fwd(a1, g[f"{self.prefix}l2.w"], g[f"{self.prefix}l2.b"])
        logit = logit[:, 0]
        p, _ = ops.sigmoid_fwd(logit)
        return p, logit, (c0, cg0, c1, cg1, c2)

    def backward(self, params: Params, glogit: np.ndarray, caches) -> np.ndarray:
        """glogit: (batch,) gradient at the logit; returns input gradient."""
        c0, cg0, c1, cg1, c2 = caches
        gy = glogit[:, None]
        ga1, gw, gb = ops.linear_bwd(gy, c2)
        params.grads[f"{self.prefix}l2.w"] += gw
        params.grads[f"{self.prefix}l2.b"] += gb
        gh = ops.gelu_bwd(ga1, cg1)
        ga0, gw, gb = ops.linear_bwd(gh, c1)
        params.grads[f"{self.prefix}l1.w"] += gw
        params.grads[f"{self.prefix}l1.b"] += gb
        gh = ops.gelu_bwd(ga0, cg0)
        gs, gw, gb = ops.linear_bwd(gh, c0)
        params.grads[f"{self.prefix}l0.w"] += gw
        params.grads[f"{self.prefix}l0.b"] += gb
        return gs


def sn_features(z: np.ndarray, deviation: float, qos: float) -> np.ndarray:
    return np.concatenate([np.asarray(z, dtype=np.float64), [deviation, qos]])


def ap_features(z_cached: np.ndarray, aoi_norm: float, d_down_norm: float,
                ap_idle: float, ap_qfrac: float, ap_resid_norm: float) -> np.ndarray:
    return np.concatenate([
        np.asarray(z_cached, dtype=np.float64),
        [aoi_norm, d_down_norm, ap_idle, ap_qfrac, ap_resid_norm],
    ])


def sn_decide(head: PolicyHead, params: Params, s: np.ndarray) -> tuple[float, int]:
    """Update (1) only on a strict majority: p == 0.5 waits."""
    p, _, _ = head.forward(params, s)
    p = float(p[0])
    return p, int(p > 0.5)


def ap_decide(head: PolicyHead, params: Params, s: np.ndarray) -> tuple[float, int]:
    """1 keeps the task local, 0 offloads; strict threshold at 0.5."""
    p, _, _ = head.forward(params, s)
    p = float(p[0])
    return p, int(p > 0.5)


# -- rule-based update schedules --------------------------------------------------


def fixed_update_times(period: float, horizon: float) -> list[float]:
    """Exactly one update per period, the first at t=period."""
    if period <= 0 or horizon <= 0:
        raise ValueError("period and horizon must be positive")
    n = int(horizon / period + 1e-9)
    return [k * period for k in range(1, n + 1)]


class FixedSchedule:
    """Periodic trigger evaluated on the decision-slot grid; the period is
    quantized to a whole number of slots."""

    def __init__(self, period: float, slot_dt: float):
        self.every = max(1, round(period / slot_dt))

    def decide(self, slot_k: int) -> bool:
        return slot_k % self.every == 0


class ContentAware:
    """Updates whenever the idle-core count differs from the last sent one."""

    def __init__(self):
        self.last_sent_idle: Optional[float] = None

    def decide(self, idle_cores: float) -> bool:
        return self.last_sent_idle is None or idle_cores != self.last_sent_idle

    def on_sent(self, idle_cores: float) -> None:
        self.last_sent_idle = idle_cores


class QaoiBucket:
    """Token-bucket freshness trigger honoring a hard update-rate budget.

    Tokens refill continuously at `rate` up to `capacity`; an update fires
    when a whole token is available and the acknowledged age exceeds half
    the current arrival-interval estimate (freshness targeted at the next
    likely query instant). The bucket starts empty, so the cumulative update
    count never exceeds rate*t at any horizon.
    """

    def __init__(self, rate: float = 50.0, capacity: float = 50.0):
        self.rate = rate
        self.capacity = capacity
        self.tokens = 0.0
        self._t_last = 0.0

    def decide(self, t_now: float, aoi: float, arrival_est: float) -> bool:
        self.tokens = min(self.capacity, self.tokens + (t_now - self._t_last) * self.rate)
        self._t_last = t_now
        threshold = 0.5 * arrival_est
        if self.tokens >= 1.0 and aoi > threshold:
            self.tokens -= 1.0
            return True
        return False


def deviation_rule(deviation: float, threshold: float = 0.2) -> int:
    """Update only when the semantic deviation strictly exceeds the threshold."""
    return int(deviation > threshold)


# -- the latency-estimator expert ---------------------------------------------------


@dataclass
class ExpertView:
    """Everything the expert can see at a decision instant."""
    t_loc_est: float
    t_off_est: float
    ap_queue_full: bool


def cached_sn_residual(raw: RawState, sn_cfg: ServerConfig, mu_cycles: float) -> float:
    """Queueing-wait estimate from a (possibly stale) remote snapshot: zero
    if a core shows idle, else per-core backlog plus half a mean service."""
    if raw.x1_idle_cores >= 1.0:
        return 0.0
    return (raw.x2_qlen_norm + 0.5) * mu_cycles / sn_cfg.freq


def expert_offload(view: ExpertView) -> Decision:
    """Local only when it strictly beats the offload estimate; a full local
    queue always offloads, and exact ties go to the remote side."""
    if view.ap_queue_full:
        return Decision.OFFLOAD
    if view.t_loc_est < view.t_off_est:
        return Decision.LOCAL
    return Decision.OFFLOAD


def threshold_forward(cached_occupancy: float, ap_queue_full: bool,
                      occ_limit: float = 0.5) -> Decision:
    """Classical forwarder for the baseline update schedules: offload while
    the cached snapshot shows remote headroom, retreat to local once the
    cached queue occupancy reaches the limit. A full local queue offloads
    regardless."""
    if ap_queue_full:
        return Decision.OFFLOAD
    if cached_occupancy >= occ_limit:
        return Decision.LOCAL
    return Decision.OFFLOAD
