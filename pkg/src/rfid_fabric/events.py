"""Minimal deterministic discrete-event loop.

Events are (time, seq, callback) entries on a heap; seq is a monotonically
increasing tie-breaker, so same-time events fire in scheduling order and a
given schedule always replays identically.  Simulated time is milliseconds
since run start; there is no wall-clock dependence anywhere.
"""

from __future__ import annotations

import heapq
from typing import Callable


class EventLoop:
    def __init__(self) -> None:
        self._heap: list[tuple[float, int, Callable[[], None]]] = []
        self._seq = 0
        self.now: float = 0.0
        self._processed = 0

    def schedule(self, time_ms: float, callback: Callable[[], None]) -> None:
        """Queue a callback; time_ms must not be in the simulated past."""
        if time_ms < self.now:
            raise ValueError(f"cannot schedule at {time_ms} before now={self.now}")
        heapq.heappush(self._heap, (time_ms, self._seq, callback))
        self._seq += 1

    def schedule_after(self, delay_ms: float, callback: Callable[[], None]) -> None:
        self.schedule(self.now + delay_ms, callback)

    def run(self, until: float | None = None) -> None:
        """Drain the heap in time order, optionally stopping after `until`."""
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                break
            time_ms, _, callback = heapq.heappop(self._heap)
            self.now = time_ms
            callback()
            self._processed += 1

    @property
    def pending(self) -> int:
        return len(self._heap)

    @property
    def processed(self) -> int:
        return self._processed
