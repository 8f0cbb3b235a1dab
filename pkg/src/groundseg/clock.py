"""Simulated time base and the single-threaded event loop everything runs on.

All services share one EventLoop.  Timed work is registered as callbacks;
driving the loop forward (run_until / run_for) advances simulated time and
fires callbacks in (time, registration order).  This keeps the full system
deterministic and lets the whole closed loop run far faster than real time.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional


def to_datetime(ms: int) -> datetime:
    return datetime.fromtimestamp(ms / 1000.0, tz=timezone.utc)


def from_datetime(dt: datetime) -> int:
    return int(dt.timestamp() * 1000)


class SimClock:
    """Monotonic simulated clock, milliseconds since the UNIX epoch."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def now_dt(self) -> datetime:
        return to_datetime(self._now)

    def _advance_to(self, t_ms: int) -> None:
        if t_ms < self._now:
            raise ValueError("clock cannot move backwards")
        self._now = t_ms


@dataclass(order=True)
class _Timer:
    when: int
    seq: int
    fn: Callable[[], None] = field(compare=False)
    cancelled: bool = field(default=False, compare=False)

    def cancel(self) -> None:
        self.cancelled = True


class EventLoop:
    """Priority queue of timed callbacks over a SimClock."""

    def __init__(self, clock: Optional[SimClock] = None):
        self.clock = clock or SimClock()
        self._queue: list[_Timer] = []
        self._seq = itertools.count()

    def call_at(self, t_ms: int, fn: Callable[[], None]) -> _Timer:
        if t_ms < self.clock.now_ms():
            t_ms = self.clock.now_ms()
        timer = _Timer(t_ms, next(self._seq), fn)
        heapq.heappush(self._queue, timer)
        return timer

    def call_later(self, delay_ms: int, fn: Callable[[], None]) -> _Timer:
        return self.call_at(self.clock.now_ms() + max(0, delay_ms), fn)

    def every(self, interval_ms: int, fn: Callable[[], None],
              start_at: Optional[int] = None) -> "PeriodicTask":
        task = PeriodicTask(self, interval_ms, fn)
        task._schedule(start_at if start_at is not None
                       else self.clock.now_ms() + interval_ms)
        return task

    def run_until(self, t_ms: int) -> None:
        """Fire every callback due at or before t_ms, then land the clock there."""
        while self._queue and self._queue[0].when <= t_ms:
            timer = heapq.heappop(self._queue)
            if timer.cancelled:
                continue
            self.clock._advance_to(timer.when)
            timer.fn()
        self.clock._advance_to(t_ms)

    def run_for(self, dt_ms: int) -> None:
        self.run_until(self.clock.now_ms() + dt_ms)

    def flush(self) -> None:
        """Run everything already due at the current instant."""
        self.run_until(self.clock.now_ms())


class PeriodicTask:
    def __init__(self, loop: EventLoop, interval_ms: int, fn: Callable[[], None]):
        self._loop = loop
        self._interval = interval_ms
        self._fn = fn
        self._timer: Optional[_Timer] = None
        self._stopped = False

    def _schedule(self, when: int) -> None:
        if self._stopped:
            return
        self._timer = self._loop.call_at(when, self._tick)

    def _tick(self) -> None:
        if self._stopped:
            return
        self._fn()
        self._schedule(self._loop.clock.now_ms() + self._interval)

    def stop(self) -> None:
        self._stopped = True
        if self._timer:
            self._timer.cancel()


class OfficeHours:
    """Staffed-hours calendar; outside these hours the segment is lights-out."""

    def __init__(self, weekdays=(0, 1, 2, 3, 4), start_hour: int = 8, end_hour: int = 17):
        self.weekdays = set(weekdays)
        self.start_hour = start_hour
        self.end_hour = end_hour

    def is_staffed(self, t_ms: int) -> bool:
        dt = to_datetime(t_ms)
        return dt.weekday() in self.weekdays and self.start_hour <= dt.hour < self.end_hour
