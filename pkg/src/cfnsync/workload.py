"""Stochastic task generation: Poisson arrivals, size-correlated Gaussian work."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


class Decision(Enum):
    UNDECIDED = "Undecided"
    LOCAL = "Local"
    OFFLOAD = "Offload"


class Outcome(Enum):
    PENDING = "Pending"
    SUCCESS = "Success"
    FAIL_OVERFLOW = "FailOverflow"
    FAIL_TIMEOUT = "FailTimeout"


@dataclass(eq=False)  # tasks are entities: identity comparison, hashable
class Task:
    id: int
    t_arrival: float
    bits: float
    cycles: float
    deadline: float
    decision: Decision = Decision.UNDECIDED
    outcome: Outcome = Outcome.PENDING
    t_complete: Optional[float] = None

    def finish(self, t: float) -> None:
        self.t_complete = t
        ok = t <= self.t_arrival + self.deadline
        self.outcome = Outcome.SUCCESS if ok else Outcome.FAIL_TIMEOUT

    @property
    def latency(self) -> Optional[float]:
        if self.t_complete is None:
            return None
        return self.t_complete - self.t_arrival


@dataclass
class WorkloadConfig:
    lambda_in: float = 30.0        # arrivals/second
    mu_cycles: float = 1e8
    sigma_cycles: float = 2e7
    mu_bits: float = 8e6           # 1.0 MB at 8e6 bits/MB (decimal)
    sigma_bits_frac: float = 0.2
    deadline: float = 1.8
    episode_len: float = 500.0

    def validate(self) -> None:
        for name in ("lambda_in", "mu_cycles", "sigma_cycles", "mu_bits",
                     "sigma_bits_frac", "deadline", "episode_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"workload.{name} must be positive")
        if self.sigma_cycles >= self.mu_cycles:
            raise ValueError("workload.sigma_cycles must be below mu_cycles")


# Workload samples below 0.1*mu are clamped; keeps cycles strictly positive
# without visibly distorting the distribution (the floor sits 4.5 sigma out
# at the default settings).
CLAMP_FRAC = 0.1


def next_interarrival(cfg: WorkloadConfig, rng: np.random.Generator) -> float:
    return rng.exponential(1.0 / cfg.lambda_in)


def sample_task(cfg: WorkloadConfig, task_id: int, t_now: float,
                rng: np.random.Generator) -> Task:
    """One task; cycles and bits share the standardized deviate so the two
    stay perfectly linearly correlated even through the clamp."""
    g = rng.standard_normal()
    cycles = max(cfg.mu_cycles + cfg.sigma_cycles * g, CLAMP_FRAC * cfg.mu_cycles)
    g_eff = (cycles - cfg.mu_cycles) / cfg.sigma_cycles
    bits = cfg.mu_bits * (1.0 + cfg.sigma_bits_frac * g_eff)
    bits = max(bits, CLAMP_FRAC * cfg.mu_bits)
    return Task(id=task_id, t_arrival=t_now, bits=bits, cycles=cycles,
                deadline=cfg.deadline)
