"""
Discrete-event engine.

Time is an integer number of microseconds. Events fire in (time, priority,
insertion) order, so two runs that schedule the same events see the same
interleaving.
"""

import heapq
import itertools
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Iterator, List, Optional, Tuple

import numpy as np

US_PER_S = 1_000_000


def to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def to_s(us: int) -> float:
    return us / US_PER_S


class Priority(IntEnum):
    # Receptions settle before anything else happening at the same instant
    TX_END = 0
    TIMER = 1
    TX_START = 2
    RX_WINDOW = 3


@dataclass(order=True)
class Event:
    time_us: int
    priority: int
    seq: int
    callback: Callable[..., Any] = field(compare=False)
    args: Tuple[Any, ...] = field(compare=False, default=())
    packet: Optional[Any] = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)

    def cancel(self) -> None:
        self.cancelled = True


class EventQueue:
    def __init__(self):
        self._heap: List[Event] = []
        self._counter = itertools.count()
        self.now_us = 0
        self.processed = 0

    def schedule(
        self,
        time_us: int,
        priority: Priority,
        callback: Callable[..., Any],
        *args: Any,
        packet: Optional[Any] = None,
    ) -> Event:
        if time_us < self.now_us:
            raise ValueError(f"cannot schedule at {time_us} us, now is {self.now_us} us")
        event = Event(int(time_us), int(priority), next(self._counter), callback, args, packet)
        heapq.heappush(self._heap, event)
        return event

    def after(self, delay_us: int, priority: Priority, callback: Callable[..., Any], *args: Any,
              packet: Optional[Any] = None) -> Event:
        return self.schedule(self.now_us + max(0, int(delay_us)), priority, callback, *args, packet=packet)

    def pop(self) -> Optional[Event]:
        while self._heap:
            event = heapq.heappop(self._heap)
            if not event.cancelled:
                return event
        return None

    def peek_time(self) -> Optional[int]:
        while self._heap and self._heap[0].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0].time_us if self._heap else None

    def run(self, until_us: int) -> None:
        """Fire every event at or before until_us."""
        while True:
            next_time = self.peek_time()
            if next_time is None or next_time > until_us:
                break
            event = self.pop()
            self.now_us = event.time_us
            event.callback(*event.args)
            self.processed += 1
        self.now_us = max(self.now_us, until_us)

    def pending(self) -> Iterator[Event]:
        return (e for e in self._heap if not e.cancelled)

    def __len__(self) -> int:
        return sum(1 for _ in self.pending())


class Stream(IntEnum):
    """Independent RNG streams of one run."""
    TOPOLOGY = 0
    TRAFFIC = 1
    STAGGER = 2
    ROUTING = 3
    JITTER = 4
    SHADOWING = 5
    PAYLOAD = 6


def rng_stream(seed: int, stream: Stream, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(int(stream), index)))
