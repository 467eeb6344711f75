"""Closed-loop episode runner: status updates on one side, task forwarding
on the other, coupled through the link and the shared cache."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .config import RunConfig
from .encoder import FeatureNormalizer, semantic_deviation, smoothness_penalty
from .events import Event, EventKind, EventLoop, RngStreams, slot_time
from .link import AoiTracker, StatusPacket, downlink_delay, uplink_delay
from .policies import (ContentAware, ExpertView, FixedSchedule, QaoiBucket,
                       cached_sn_residual, deviation_rule, expert_offload,
                       threshold_forward)
from .server import EWMA_ALPHA, ServerState, SubmitResult, update_arrival_estimate
from .workload import Decision, Outcome, Task, next_interarrival, sample_task

SN_POLICIES = ("semantic", "fixed", "content", "qaoi", "threshold", "always", "never")
AP_POLICIES = ("learned", "expert", "cached_threshold", "offload_all", "local_all")


def default_ap_policy(sn_policy: str) -> str:
    """The learned stack forwards with its trained head; every other update
    schedule pairs with the classical occupancy-threshold rule on the cached
    snapshot (offload while the remote side shows headroom)."""
    return "learned" if sn_policy == "semantic" else "cached_threshold"


@dataclass
class Metrics:
    policy: str
    lam: float
    seed: int
    episode_len: float
    backend: str
    arrivals: int = 0
    successes: int = 0
    fail_overflow: int = 0
    fail_timeout: int = 0
    in_system: int = 0
    decided_local: int = 0
    decided_offload: int = 0
    updates: int = 0
    update_freq: float = 0.0
    success_rate: float = 1.0
    mean_delay: float = 0.0
    cost_task: float = 0.0
    cost_comm: float = 0.0
    cost_sem: float = 0.0
    objective: float = 0.0
    update_intervals: list = field(default_factory=list)

    CSV_FIELDS = ("policy", "lam", "seed", "episode_len", "backend", "arrivals",
                  "successes", "fail_overflow", "fail_timeout", "in_system",
                  "decided_local", "decided_offload", "updates", "update_freq",
                  "success_rate", "mean_delay", "cost_task", "cost_comm",
                  "cost_sem", "objective")

    def csv_row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]


class Episode:
    """One seeded run. Hooks (on_slot, on_task_decided, on_task_done,
    ap_override) let the trace collector observe and perturb decisions."""

    def __init__(self, cfg: RunConfig, sn_policy: str, ap_policy: str,
                 seed: int, params=None, trace_path: Optional[str] = None,
                 force_numpy: bool = False):
        base = sn_policy.split(":")[0]
        if base not in SN_POLICIES and not sn_policy.startswith("periodic:"):
            raise ValueError(f"unknown sn policy {sn_policy!r}")
        if ap_policy not in AP_POLICIES:
            raise ValueError(f"unknown ap policy {ap_policy!r}")
        self.cfg = cfg
        self.sn_policy = sn_policy
        self.ap_policy = ap_policy
        self.seed = seed
        self.params = params
        self.force_numpy = force_numpy

        self.needs_encoder = sn_policy in ("semantic", "threshold")
        if (self.needs_encoder or ap_policy == "learned") and params is None:
            raise ValueError(f"policy {sn_policy}/{ap_policy} needs trained parameters")

        self.loop = EventLoop(trace_path)
        self.rng = RngStreams(seed)
        self.ap = ServerState(cfg.ap)
        self.sn = ServerState(cfg.sn)
        self.tracker = AoiTracker()
        self.normalizer = FeatureNormalizer(cfg.sn.n_cores, cfg.workload.deadline,
                                            cfg.sn.q_max)

        self.encode = None
        self.sn_prob = None
        self.ap_prob = None
        if self.needs_encoder:
            self.encode = _kernels.make_encoder_fn(cfg.encoder, params, force_numpy)
        if sn_policy == "semantic":
            self.sn_prob = _kernels.make_mlp_fn(params, "sn.", force_numpy)
        if ap_policy == "learned":
            self.ap_prob = _kernels.make_mlp_fn(params, "ap.", force_numpy)

        self.ticks_per_sec = round(1.0 / cfg.slot_dt)
        self.fixed = FixedSchedule(cfg.policy.fixed_period, cfg.slot_dt)
        if sn_policy.startswith("periodic:"):
            self.fixed = FixedSchedule(float(sn_policy.split(":")[1]), cfg.slot_dt)
        self.content = ContentAware()
        self.qaoi = QaoiBucket(cfg.policy.qaoi_rate, cfg.policy.qaoi_capacity)

        # service-node side bookkeeping
        self.last_c_norm = 1.0          # neutral start: a mean-workload task
        self.arrival_est = 0.0
        self.last_sn_arrival: Optional[float] = None
        self.b_up_est = cfg.link.b_up   # smoothed realized uplink rate
        self.pkt_seq = 0
        self.last_sent_z: Optional[np.ndarray] = None
        self.prev_z: Optional[np.ndarray] = None

        # access-point cache, installed by the t=0 bootstrap sync
        self.cache_z: Optional[np.ndarray] = None
        self.cache_raw = None

        self.update_times: list[float] = []
        self.tasks: list[Task] = []
        self.completed_latencies: list[float] = []
        self.cost_task = 0.0
        self.cost_sem = 0.0
        self.next_task_id = 0

        # hooks for the trace collector
        self.on_slot: Optional[Callable] = None
        self.on_task_decided: Optional[Callable] = None
        self.on_task_done: Optional[Callable] = None
        self.ap_override: Optional[Callable] = None

        self.loop.on(EventKind.TASK_ARRIVAL, self._handle_arrival)
        self.loop.on(EventKind.SLOT_TICK, self._handle_tick)
        self.loop.on(EventKind.UPLINK_DELIVERED, self._handle_uplink)
        self.loop.on(EventKind.DOWNLINK_DELIVERED, self._handle_downlink)
        self.loop.on(EventKind.SERVICE_COMPLETE, self._handle_complete)

    # -- feature assembly -----------------------------------------------------

    def sn_raw_state(self, t: float):
        return self.sn.raw_state(self.tracker.sender_aoi(t), self.last_c_norm,
                                 self.arrival_est, t)

    def qos_estimate(self) -> float:
        link = self.cfg.link
        delay = link.s_stat / self.b_up_est + link.d_prop_mean
        return self.normalizer.clip_scalar(delay / self.cfg.workload.deadline)

    def downlink_estimate(self, bits: float) -> float:
        link = self.cfg.link
        return bits / link.b_down + link.d_prop_mean

    def ap_feature_vector(self, task: Task, t: float) -> np.ndarray:
        dl = self.cfg.workload.deadline
        clip = self.normalizer.clip_scalar
        return np.concatenate([
            self.cache_z,
            [clip(self.tracker.receiver_aoi(t) / dl),
             clip(self.downlink_estimate(task.bits) / dl),
             float(self.ap.idle_cores()),
             self.ap.occupancy(),
             clip(self.ap.residual_queue_time(t) / dl)],
        ])

    def expert_view(self, task: Task, t: float) -> ExpertView:
        t_loc = self.ap.residual_queue_time(t) + task.cycles / self.cfg.ap.freq
        t_off = (self.downlink_estimate(task.bits)
                 + cached_sn_residual(self.cache_raw, self.cfg.sn,
                                      self.cfg.workload.mu_cycles)
                 + task.cycles / self.cfg.sn.freq)
        full = (self.ap.idle_cores() == 0
                and len(self.ap.queue) >= self.cfg.ap.q_max)
        return ExpertView(t_loc_est=t_loc, t_off_est=t_off, ap_queue_full=full)

    # -- event handlers ---------------------------------------------------------

    def _handle_arrival(self, ev: Event) -> None:
        t = ev.time
        task = sample_task(self.cfg.workload, self.next_task_id, t, self.rng.workloads)
        self.next_task_id += 1
        self.tasks.append(task)
        self.loop.stats.inc("arrivals")

        gap = next_interarrival(self.cfg.workload, self.rng.arrivals)
        self.loop.schedule(Event(t + gap, EventKind.TASK_ARRIVAL))

        view = self.expert_view(task, t)
        if self.ap_policy == "offload_all":
            decision = Decision.OFFLOAD
        elif self.ap_policy == "local_all":
            decision = Decision.LOCAL
        elif self.ap_policy == "expert":
            decision = expert_offload(view)
        elif self.ap_policy == "cached_threshold":
            occ = (self.cache_raw.x2_qlen_norm * self.cfg.sn.n_cores
                   / self.cfg.sn.q_max)
            decision = threshold_forward(occ, view.ap_queue_full)
        else:
            p = self.ap_prob(self.ap_feature_vector(task, t))
            decision = Decision.LOCAL if p > 0.5 else Decision.OFFLOAD
        if self.ap_override is not None:
            decision = self.ap_override(task, t, decision, view)
        task.decision = decision

        if self.on_task_decided is not None:
            self.on_task_decided(task, t, view)

        if decision == Decision.LOCAL:
            self.loop.stats.inc("decided_local")
            self._submit(self.ap, "ap", task, t)
        else:
            self.loop.stats.inc("decided_offload")
            delay = downlink_delay(self.cfg.link, task.bits, t, self.rng.link)
            self.loop.schedule(Event(t + delay, EventKind.DOWNLINK_DELIVERED, task))

    def _submit(self, server: ServerState, tag: str, task: Task, t: float) -> None:
        result, done = server.submit(task, t)
        if result == SubmitResult.STARTED:
            self.loop.schedule(Event(done, EventKind.SERVICE_COMPLETE, (tag, task)))
        elif result == SubmitResult.DROPPED:
            self.loop.stats.inc("fail_overflow")
            self.cost_task += self.cfg.cost.p_fail
            if self.on_task_done is not None:
                self.on_task_done(task)

    def _handle_downlink(self, ev: Event) -> None:
        t = ev.time
        task: Task = ev.payload
        if self.last_sn_arrival is not None:
            self.arrival_est = update_arrival_estimate(
                self.arrival_est, t - self.last_sn_arrival, EWMA_ALPHA)
        self.last_sn_arrival = t
        self._submit(self.sn, "sn", task, t)

    def _handle_complete(self, ev: Event) -> None:
        t = ev.time
        tag, task = ev.payload
        server = self.ap if tag == "ap" else self.sn
        started = server.complete(task, t)
        if started is not None:
            nxt, done = started
            self.loop.schedule(Event(done, EventKind.SERVICE_COMPLETE, (tag, nxt)))
        task.finish(t)
        self.completed_latencies.append(task.latency)
        if tag == "sn":
            self.last_c_norm = task.cycles / self.cfg.workload.mu_cycles
        if task.outcome == Outcome.SUCCESS:
            self.loop.stats.inc("successes")
            self.cost_task += max(0.0, task.latency - task.deadline)
        else:
            self.loop.stats.inc("fail_timeout")
            self.cost_task += self.cfg.cost.p_fail
        if self.on_task_done is not None:
            self.on_task_done(task)

    def _decide_update(self, k: int, t: float, raw, z) -> bool:
        pol = self.sn_policy
        if pol == "semantic":
            dev = semantic_deviation(z, self.last_sent_z)
            feats = np.concatenate([z, [dev, self.qos_estimate()]])
            return self.sn_prob(feats) > 0.5
        if pol == "threshold":
            dev = semantic_deviation(z, self.last_sent_z)
            return bool(deviation_rule(dev, self.cfg.policy.deviation_threshold))
        if pol == "fixed" or pol.startswith("periodic:"):
            return self.fixed.decide(k)
        if pol == "content":
            return self.content.decide(raw.x1_idle_cores)
        if pol == "qaoi":
            return self.qaoi.decide(t, self.tracker.sender_aoi(t), self.arrival_est)
        if pol == "always":
            return True
        return False  # "never"

    def _handle_tick(self, ev: Event) -> None:
        k = ev.payload
        t = ev.time
        self.loop.schedule(Event(slot_time(k + 1, self.ticks_per_sec),
                                 EventKind.SLOT_TICK, k + 1))
        raw = self.sn_raw_state(t)
        z = None
        if self.encode is not None:
            z = self.encode(self.normalizer.apply(raw.as_array()))
            self.cost_sem += smoothness_penalty(z, self.prev_z)
            self.prev_z = z
        if self.on_slot is not None:
            self.on_slot(k, t, raw, z)
        if self._decide_update(k, t, raw, z):
            self._send_status(t, raw, z)

    def _send_status(self, t: float, raw, z) -> None:
        pkt = StatusPacket(gen_time=t, z=z, x_raw=raw, seq=self.pkt_seq)
        self.pkt_seq += 1
        delay = uplink_delay(self.cfg.link, t, self.rng.link)
        self.loop.schedule(Event(t + delay, EventKind.UPLINK_DELIVERED, pkt))
        self.loop.stats.inc("updates")
        self.update_times.append(t)
        if z is not None:
            self.last_sent_z = z
        self.content.on_sent(raw.x1_idle_cores)

    def _handle_uplink(self, ev: Event) -> None:
        t = ev.time
        pkt: StatusPacket = ev.payload
        fresh = self.tracker.on_delivery(pkt)
        if fresh:
            self.cache_z = pkt.z
            self.cache_raw = pkt.x_raw
        # smoothed uplink-rate estimate from the realized delay
        trans = max(t - pkt.gen_time - self.cfg.link.d_prop_mean, 1e-9)
        rate = self.cfg.link.s_stat / trans
        self.b_up_est = EWMA_ALPHA * rate + (1.0 - EWMA_ALPHA) * self.b_up_est

    # -- lifecycle --------------------------------------------------------------

    def _bootstrap(self) -> None:
        """t=0 sync: both sides start from the same snapshot so the cache is
        never empty; not counted as a policy update."""
        raw = self.sn_raw_state(0.0)
        z = None
        if self.encode is not None:
            z = self.encode(self.normalizer.apply(raw.as_array()))
            self.last_sent_z = z
            self.prev_z = z
        self.cache_z = z
        self.cache_raw = raw
        self.content.on_sent(raw.x1_idle_cores)

    def run(self) -> Metrics:
        t_end = self.cfg.workload.episode_len
        self._bootstrap()
        self.loop.schedule(Event(
            next_interarrival(self.cfg.workload, self.rng.arrivals),
            EventKind.TASK_ARRIVAL))
        self.loop.schedule(Event(slot_time(1, self.ticks_per_sec),
                                 EventKind.SLOT_TICK, 1))
        stats = self.loop.run_until(t_end)
        self.loop.close()
        return self._metrics(stats, t_end)

    def _metrics(self, stats, t_end: float) -> Metrics:
        m = Metrics(policy=self.sn_policy, lam=self.cfg.workload.lambda_in,
                    seed=self.seed, episode_len=t_end,
                    backend=_kernels.backend_name(self.force_numpy))
        m.arrivals = stats.get("arrivals")
        m.successes = stats.get("successes")
        m.fail_overflow = stats.get("fail_overflow")
        m.fail_timeout = stats.get("fail_timeout")
        m.in_system = m.arrivals - m.successes - m.fail_overflow - m.fail_timeout
        m.decided_local = stats.get("decided_local")
        m.decided_offload = stats.get("decided_offload")
        m.updates = stats.get("updates")
        m.update_freq = m.updates / t_end
        terminal = m.successes + m.fail_overflow + m.fail_timeout
        m.success_rate = m.successes / terminal if terminal else 1.0
        if self.completed_latencies:
            m.mean_delay = float(np.mean(self.completed_latencies))
        m.cost_task = self.cost_task
        m.cost_comm = (m.updates * self.cfg.cost.omega_up
                       + m.decided_offload * self.cfg.cost.omega_down)
        m.cost_sem = self.cost_sem
        m.objective = (m.cost_task + self.cfg.cost.lambda_comm * m.cost_comm
                       + self.cfg.cost.lambda_sem * m.cost_sem) / t_end
        m.update_intervals = list(np.diff(self.update_times)) if len(self.update_times) > 1 else []
        return m


def run_episode(cfg: RunConfig, sn_policy: str, ap_policy: Optional[str],
                seed: int, params=None, trace_path: Optional[str] = None,
                force_numpy: bool = False) -> Metrics:
    if ap_policy is None or ap_policy == "auto":
        ap_policy = default_ap_policy(sn_policy)
    ep = Episode(cfg, sn_policy, ap_policy, seed, params=params,
                 trace_path=trace_path, force_numpy=force_numpy)
    return ep.run()
