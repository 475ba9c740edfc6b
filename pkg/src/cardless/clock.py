"""Clock abstraction: wall time for the live gateway, logical time for sims.

All timestamps in the package are Unix seconds as floats.  The simulator
advances a LogicalClock explicitly so that identical scenarios produce
identical event timestamps regardless of host speed.
"""

from __future__ import annotations

import time


class Clock:
    def now(self) -> float:
        raise NotImplementedError


class SystemClock(Clock):
    def now(self) -> float:
        return time.time()


class LogicalClock(Clock):
    """Manually advanced clock; never moves on its own."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("logical clock cannot move backwards")
        self._now += seconds
        return self._now

    def advance_to(self, timestamp: float) -> float:
        if timestamp < self._now:
            raise ValueError("logical clock cannot move backwards")
        self._now = float(timestamp)
        return self._now
