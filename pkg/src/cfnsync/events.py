"""Deterministic discrete-event engine: future-event list, clock, seeded streams."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np


class EventKind(Enum):
    TASK_ARRIVAL = "TaskArrival"
    SERVICE_COMPLETE = "ServiceComplete"
    UPLINK_DELIVERED = "UplinkDelivered"
    DOWNLINK_DELIVERED = "DownlinkDelivered"
    SLOT_TICK = "SlotTick"


@dataclass(order=False)
class Event:
    time: float
    kind: EventKind
    payload: Any = None
    seq: int = -1  # assigned by the engine at schedule time


class CausalityError(ValueError):
    """An event was scheduled in the past; always a caller bug."""


class RngStreams:
    """Named independent generator streams, all derived from one master seed.

    Same master seed + same draw order => bit-identical traces.
    """

    NAMES = ("arrivals", "workloads", "link", "explore")

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        children = np.random.SeedSequence(self.master_seed).spawn(len(self.NAMES))
        for name, ss in zip(self.NAMES, children):
            setattr(self, name, np.random.Generator(np.random.PCG64(ss)))


class EpisodeStats:
    """Counter bag aggregated over one run; handlers increment freely."""

    def __init__(self):
        self.counters: dict[str, int] = {}

    def inc(self, name: str, by: int = 1) -> None:
        self.counters[name] = self.counters.get(name, 0) + by

    def get(self, name: str) -> int:
        return self.counters.get(name, 0)

    def as_dict(self) -> dict[str, int]:
        return dict(sorted(self.counters.items()))

    def __eq__(self, other) -> bool:
        return isinstance(other, EpisodeStats) and self.counters == other.counters


class EventLoop:
    """Sequential future-event list with a monotone clock.

    Ties at equal times fire in insertion order (seq). One handler per
    event kind, registered by the episode wiring.
    """

    def __init__(self, trace_path: Optional[str] = None):
        self.clock = 0.0
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = 0
        self._handlers: dict[EventKind, Callable[[Event], None]] = {}
        self.stats = EpisodeStats()
        self._trace_file = open(trace_path, "w") if trace_path else None
        self.processed_log: list[tuple[float, EventKind]] = []
        self.keep_log = False

    def on(self, kind: EventKind, handler: Callable[[Event], None]) -> None:
        self._handlers[kind] = handler

    def schedule(self, ev: Event) -> None:
        if ev.time < self.clock:
            raise CausalityError(
                f"event {ev.kind.value} at t={ev.time!r} is before clock t={self.clock!r}"
            )
        ev.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (ev.time, ev.seq, ev))

    def run_until(self, t_end: float) -> EpisodeStats:
        """Process every due event (time <= t_end) exactly once, in order."""
        if t_end <= 0:
            raise ValueError("t_end must be positive")
        while self._heap and self._heap[0][0] <= t_end:
            _, _, ev = heapq.heappop(self._heap)
            self.clock = ev.time
            if self.keep_log:
                self.processed_log.append((ev.time, ev.kind))
            if self._trace_file is not None:
                entity = getattr(ev.payload, "id", None)
                if entity is None and isinstance(ev.payload, (int, str)):
                    entity = ev.payload
                self._trace_file.write(
                    json.dumps({"t": ev.time, "kind": ev.kind.value, "entity": entity})
                    + "\n"
                )
            handler = self._handlers.get(ev.kind)
            if handler is not None:
                handler(ev)
        self.clock = t_end
        if self._trace_file is not None:
            self._trace_file.flush()
        return self.stats

    def close(self) -> None:
        if self._trace_file is not None:
            self._trace_file.close()
            self._trace_file = None


def slot_time(k: int, ticks_per_second: int) -> float:
    """Time of decision slot k. Computed fresh from the integer index so tick
    times carry no accumulated float drift (k/100 is exact for whole seconds)."""
    return k / ticks_per_second
