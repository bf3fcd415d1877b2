"""Iteration clocks for the recovery timeline.

A clock is any object with `charge(tag, solve_time_s) -> float` returning
the elapsed time since the clock started (i.e. since the outage). The wall
clock reports real elapsed time; the synthetic clock accumulates a fixed,
configurable cost per charged tag and is fully deterministic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

__all__ = ["SyntheticCosts", "SyntheticClock", "WallClock"]


@dataclass(frozen=True)
class SyntheticCosts:
    """Deterministic per-iteration costs (seconds) by subproblem tag."""

    beamforming_s: float = 0.025
    phase_s: float = 0.025
    adaption_s: float = 0.0

    def __post_init__(self):
        if self.beamforming_s <= 0 or self.phase_s <= 0:
            raise ValueError("solver iteration costs must be positive")
        if self.adaption_s < 0:
            raise ValueError("adaption cost must be nonnegative")

    def of(self, tag: str) -> float:
        return {"w": self.beamforming_s, "v": self.phase_s, "adaption": self.adaption_s}[tag]


class SyntheticClock:
    def __init__(self, costs: SyntheticCosts | None = None):
        self.costs = costs or SyntheticCosts()
        self.elapsed_s = 0.0

    def charge(self, tag: str, solve_time_s: float = 0.0) -> float:
        self.elapsed_s += self.costs.of(tag)
        return self.elapsed_s


class WallClock:
    """Real elapsed time; strictly increasing even for back-to-back charges."""

    _MIN_STEP = 1e-9

    def __init__(self):
        self._start = time.perf_counter()
        self._last = 0.0

    def charge(self, tag: str, solve_time_s: float = 0.0) -> float:
        now = time.perf_counter() - self._start
        now = max(now, self._last + self._MIN_STEP)
        self._last = now
        return now
