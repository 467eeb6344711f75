"""Uplink/downlink delay models, status packets, and age-of-information
bookkeeping on both sides of the pair."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .server import RawState


@dataclass
class LinkConfig:
    b_up: float = 20e6            # bits/second, status uplink
    b_down: float = 50e6          # bits/second, task downlink
    d_prop_mean: float = 0.005    # seconds
    d_prop_jitter_frac: float = 0.0
    s_stat: float = 2048.0        # status packet size, bits

    def validate(self) -> None:
        if self.b_up <= 0 or self.b_down <= 0:
            raise ValueError("link bandwidths must be positive")
        if self.d_prop_mean < 0:
            raise ValueError("link.d_prop_mean must be >= 0")
        if not 0 <= self.d_prop_jitter_frac < 1:
            raise ValueError("link.d_prop_jitter_frac must be in [0, 1)")
        if self.s_stat <= 0:
            raise ValueError("link.s_stat must be positive")


@dataclass
class StatusPacket:
    gen_time: float
    z: np.ndarray            # semantic vector at generation time
    x_raw: RawState          # raw snapshot, carried for baselines/diagnostics
    seq: int


def _prop_delay(cfg: LinkConfig, rng: Optional[np.random.Generator]) -> float:
    j = cfg.d_prop_jitter_frac
    if j == 0.0 or rng is None:
        return cfg.d_prop_mean
    return cfg.d_prop_mean * (1.0 + rng.uniform(-j, j))


def uplink_delay(cfg: LinkConfig, t: float,
                 rng: Optional[np.random.Generator] = None) -> float:
    return cfg.s_stat / cfg.b_up + _prop_delay(cfg, rng)


def downlink_delay(cfg: LinkConfig, bits: float, t: float,
                   rng: Optional[np.random.Generator] = None) -> float:
    if bits <= 0:
        raise ValueError("task size must be positive")
    return bits / cfg.b_down + _prop_delay(cfg, rng)


class AoiTracker:
    """Receiver-side freshness plus the sender's acknowledged view.

    The acknowledgement is modeled as instantaneous at delivery, so the
    sender's acked generation time can never lead the receiver's.
    """

    def __init__(self):
        self.last_received_gen_time = 0.0   # access-point side
        self.last_acked_gen_time = 0.0      # service-node side

    def receiver_aoi(self, t_now: float) -> float:
        return t_now - self.last_received_gen_time

    def sender_aoi(self, t_now: float) -> float:
        return t_now - self.last_acked_gen_time

    def on_delivery(self, pkt: StatusPacket) -> bool:
        """Returns True when the packet refreshed the cache (not stale)."""
        fresh = pkt.gen_time > self.last_received_gen_time
        if fresh:
            self.last_received_gen_time = pkt.gen_time
        self.last_acked_gen_time = max(self.last_acked_gen_time, pkt.gen_time)
        return fresh
