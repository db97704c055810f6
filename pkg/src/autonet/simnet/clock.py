"""Logical millisecond clock with a FIFO-stable event queue."""

from __future__ import annotations

import heapq
import itertools
from typing import Any, Callable


class SimClock:
    """Time-ordered callback queue.

    Events with equal timestamps run in insertion order. Callbacks may
    schedule further events, including at the current time.
    """

    def __init__(self, start: int = 0):
        self.now = int(start)
        self._queue: list[tuple[int, int, Callable[..., Any], tuple]] = []
        self._seq = itertools.count()

    def schedule(self, t: int, fn: Callable[..., Any], *args: Any) -> None:
        t = int(t)
        if t < self.now:
            raise ValueError(f"cannot schedule at t={t} before now={self.now}")
        heapq.heappush(self._queue, (t, next(self._seq), fn, args))

    def call_later(self, delay: int, fn: Callable[..., Any], *args: Any) -> None:
        if delay < 0:
            raise ValueError("negative delay")
        self.schedule(self.now + int(delay), fn, *args)

    def pending(self) -> int:
        return len(self._queue)

    def next_time(self) -> int | None:
        return self._queue[0][0] if self._queue else None

    def run_until(self, until: int) -> None:
        """Process every event with timestamp <= until, then set now = until."""
        until = int(until)
        if until < self.now:
            raise ValueError(f"until={until} is before now={self.now}")
        while self._queue and self._queue[0][0] <= until:
            t, _, fn, args = heapq.heappop(self._queue)
            self.now = t
            fn(*args)
        self.now = until
