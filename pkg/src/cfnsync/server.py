"""FCFS multi-core server model shared by the access point and the service
node, plus extraction of the six-dimensional raw resource state."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .workload import Outcome, Task

EWMA_ALPHA = 0.1


class SubmitResult(Enum):
    STARTED = "Started"
    QUEUED = "Queued"
    DROPPED = "Dropped"


@dataclass
class ServerConfig:
    n_cores: int
    freq: float      # cycles/second
    q_max: int       # waiting-queue capacity, excludes in-service tasks

    def validate(self) -> None:
        if self.n_cores < 1:
            raise ValueError("server.n_cores must be >= 1")
        if self.freq <= 0:
            raise ValueError("server.freq must be positive")
        if self.q_max < 0:
            raise ValueError("server.q_max must be >= 0")


@dataclass
class RawState:
    """Snapshot of a server's physical resource state.

    x1 idle cores, x2 queue length per core, x3 head-of-line wait (s),
    x4 age of the last acknowledged status (s), x5 last completed workload
    normalized by the mean, x6 smoothed inter-arrival estimate (s).
    """
    x1_idle_cores: float
    x2_qlen_norm: float
    x3_hol_wait: float
    x4_aoi: float
    x5_last_workload_norm: float
    x6_arrival_est: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1_idle_cores, self.x2_qlen_norm, self.x3_hol_wait,
                         self.x4_aoi, self.x5_last_workload_norm,
                         self.x6_arrival_est], dtype=np.float64)


class ServerState:
    """Work-conserving FCFS server: a freed core always pulls the queue head."""

    def __init__(self, cfg: ServerConfig):
        cfg.validate()
        self.cfg = cfg
        # busy cores as (completion_time, task); order is not significant
        self.busy: list[tuple[float, Task]] = []
        self.queue: list[tuple[Task, float]] = []   # (task, enqueue_time)
        self.submitted = 0
        self.completed = 0
        self.dropped = 0
        self.waits: list[float] = []                # start_service - enqueue
        self.service_order: list[int] = []          # task ids, start order
        # time integral of queue length, for Little's-law checks
        self._q_area = 0.0
        self._q_last_t = 0.0

    # -- internal bookkeeping ------------------------------------------------

    def _account_queue(self, t_now: float) -> None:
        self._q_area += len(self.queue) * (t_now - self._q_last_t)
        self._q_last_t = t_now

    def time_avg_queue_len(self, t_now: float) -> float:
        self._account_queue(t_now)
        return self._q_area / t_now if t_now > 0 else 0.0

    def _start(self, task: Task, t_now: float) -> float:
        done = t_now + task.cycles / self.cfg.freq
        self.busy.append((done, task))
        self.service_order.append(task.id)
        return done

    # -- operations ----------------------------------------------------------

    def submit(self, task: Task, t_now: float) -> tuple[SubmitResult, Optional[float]]:
        """Returns the result and, when started, the completion time."""
        self.submitted += 1
        self._account_queue(t_now)
        if len(self.busy) < self.cfg.n_cores:
            self.waits.append(0.0)
            return SubmitResult.STARTED, self._start(task, t_now)
        if len(self.queue) < self.cfg.q_max:
            self.queue.append((task, t_now))
            return SubmitResult.QUEUED, None
        self.dropped += 1
        task.outcome = Outcome.FAIL_OVERFLOW
        return SubmitResult.DROPPED, None

    def complete(self, task: Task, t_now: float) -> Optional[tuple[Task, float]]:
        """Marks task done, frees its core; returns (next_task, completion_time)
        if the queue head was started."""
        self.completed += 1
        self._account_queue(t_now)
        for i, (_, t) in enumerate(self.busy):
            if t is task:
                self.busy.pop(i)
                break
        else:
            raise ValueError(f"task {task.id} not in service")
        if self.queue:
            nxt, enq = self.queue.pop(0)
            self.waits.append(t_now - enq)
            return nxt, self._start(nxt, t_now)
        return None

    def idle_cores(self) -> int:
        return self.cfg.n_cores - len(self.busy)

    def occupancy(self) -> float:
        """Waiting-queue fill fraction in [0, 1]."""
        if self.cfg.q_max == 0:
            return 0.0
        return len(self.queue) / self.cfg.q_max

    def residual_queue_time(self, t_now: float) -> float:
        """Wait a task submitted now would see before starting service.

        Exact drain simulation over current core completion times and the
        queued tasks' service demands; zero when an idle core exists.
        """
        if len(self.busy) < self.cfg.n_cores:
            return 0.0
        free_at = sorted(done for done, _ in self.busy)
        for task, _ in self.queue:
            t_start = free_at[0]
            free_at[0] = t_start + task.cycles / self.cfg.freq
            free_at.sort()
        return max(free_at[0] - t_now, 0.0)

    def raw_state(self, aoi: float, last_c_norm: float, arrival_est: float,
                  t_now: float) -> RawState:
        hol = t_now - self.queue[0][1] if self.queue else 0.0
        return RawState(
            x1_idle_cores=float(self.idle_cores()),
            x2_qlen_norm=len(self.queue) / self.cfg.n_cores,
            x3_hol_wait=hol,
            x4_aoi=aoi,
            x5_last_workload_norm=last_c_norm,
            x6_arrival_est=arrival_est,
        )


def update_arrival_estimate(prev_est: float, new_gap: float,
                            alpha: float = EWMA_ALPHA) -> float:
    """Exponentially weighted moving average of inter-arrival gaps."""
    if prev_est < 0 or new_gap < 0:
        raise ValueError("arrival estimate inputs must be nonnegative")
    return alpha * new_gap + (1.0 - alpha) * prev_est
