"""Pluggable time source shared by the dispatcher, the fake cluster and bench.

Two implementations: ``WallClock`` (real monotonic time, real sleeps) and
``VirtualClock`` (a counter advanced only by ``sleep``), so timing-sensitive
behaviour can be tested deterministically.
"""

from __future__ import annotations

import threading
import time
from typing import Protocol, runtime_checkable


@runtime_checkable
class Clock(Protocol):
    def now(self) -> float:
        """Seconds since an arbitrary epoch; monotone non-decreasing."""
        ...

    def sleep(self, seconds: float) -> None:
        ...


class WallClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Deterministic clock: time moves only when someone sleeps."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"cannot sleep a negative duration: {seconds}")
        with self._lock:
            self._now += seconds

    def advance(self, seconds: float) -> None:
        self.sleep(seconds)
