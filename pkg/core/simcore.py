"""Deterministic discrete-event engine.

Time is an integer count of microseconds. Events are ordered by
``(fire_at, seq)`` where ``seq`` is the insertion counter, so events sharing
a timestamp fire in the order they were scheduled. All randomness is drawn
from named :class:`RngStream` objects derived from the scenario seed.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Dict, List, Optional, Tuple
import hashlib
import heapq
import logging

import numpy as np

from core.errors import SchedulingError


SimTime = int

US_PER_MS = 1_000
US_PER_SECOND = 1_000_000


def from_seconds(seconds: float) -> SimTime:
    """Convert seconds to integer microseconds"""
    return int(round(seconds * US_PER_SECOND))


def from_ms(milliseconds: float) -> SimTime:
    """Convert milliseconds to integer microseconds"""
    return int(round(milliseconds * US_PER_MS))


def to_seconds(t: SimTime) -> float:
    return t / US_PER_SECOND


def to_ms(t: SimTime) -> float:
    return t / US_PER_MS


class EventKind(IntEnum):
    """Kinds of events processed by the engine"""
    FRAME_TICK = 0
    PACKET_ARRIVAL = 1
    TRAJECTORY_UPDATE = 2
    METRICS_WINDOW = 3
    MEDIA_EMISSION = 4


@dataclass(order=True, slots=True)
class Event:
    fire_at: SimTime
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(default=None, compare=False)
    cancelled: bool = field(default=False, compare=False)


class RngStream:
    """Named random stream; the same (seed, stream_id) always yields the same draws"""

    def __init__(self, seed: int, stream_id: str):
        self.seed = seed
        self.stream_id = stream_id
        label = int.from_bytes(
            hashlib.blake2b(stream_id.encode("utf-8"), digest_size=8).digest(), "big"
        )
        sequence = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, label])
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def random(self) -> float:
        return float(self.generator.random())

    def normal(self, mean: float = 0.0, sigma: float = 1.0) -> float:
        if sigma <= 0:
            return mean
        return float(self.generator.normal(mean, sigma))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(self.generator.uniform(low, high))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id!r})"


EventHandler = Callable[[Event], None]


class Engine:
    """Single-threaded event loop with a virtual integer clock"""

    def __init__(self, seed: int = 0, record_log: bool = False):
        self.seed = seed
        self.now: SimTime = 0
        self.queue: List[Event] = []
        self.handlers: Dict[EventKind, EventHandler] = {}
        self.streams: Dict[str, RngStream] = {}
        self.record_log = record_log
        self.event_log: List[Tuple[SimTime, int, str]] = []
        self.fired = 0
        self._seq = 0
        self.logger = logging.getLogger(__name__)

    def on(self, kind: EventKind, handler: EventHandler) -> None:
        """Register the handler for an event kind"""
        if kind in self.handlers:
            self.logger.warning(f"Handler for {kind.name} already registered, overwriting")
        self.handlers[kind] = handler

    def rng(self, stream_id: str) -> RngStream:
        """Get (or create) the named random stream of this engine"""
        stream = self.streams.get(stream_id)
        if stream is None:
            stream = RngStream(self.seed, stream_id)
            self.streams[stream_id] = stream
        return stream

    def schedule(self, fire_at: SimTime, kind: EventKind, payload: Any = None) -> Event:
        """Enqueue an event; the returned event is the handle used for cancel()"""
        if fire_at < self.now:
            raise SchedulingError(
                f"Cannot schedule {kind.name} at t={fire_at}us, clock is at t={self.now}us"
            )
        event = Event(int(fire_at), self._seq, kind, payload)
        self._seq += 1
        heapq.heappush(self.queue, event)
        return event

    def cancel(self, event: Event) -> None:
        event.cancelled = True

    def pending(self) -> int:
        return sum(1 for event in self.queue if not event.cancelled)

    def run_until(self, t_end: SimTime) -> int:
        """Fire every event with fire_at <= t_end in order; return the number fired"""
        count = 0
        while self.queue and self.queue[0].fire_at <= t_end:
            event = heapq.heappop(self.queue)
            if event.cancelled:
                continue

            self.now = event.fire_at
            if self.record_log:
                self.event_log.append((event.fire_at, event.seq, event.kind.name))

            handler = self.handlers.get(event.kind)
            if handler is not None:
                handler(event)
            count += 1

        # The horizon is inclusive and the clock always reaches it
        if t_end > self.now:
            self.now = t_end
        self.fired += count
        return count

    def next_event_time(self) -> Optional[SimTime]:
        for event in sorted(self.queue):
            if not event.cancelled:
                return event.fire_at
        return None
