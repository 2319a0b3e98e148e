"""Delay measures and reward normalisation.

A vehicle's linear delay is 1 - v/v_max (0 at free flow, 1 when stopped).
The control objective tracks a squared variant, summed over every vehicle on
the incoming lanes: squaring weighs nearly-stopped vehicles more than the
same total speed deficit spread across many moving vehicles, e.g. two
vehicles at half speed score 1.5 while a single stopped one scores 1.0.

Rewards normalise the squared total against the worst value seen so far in
the run, giving r in [0, 1] where 1 is an empty or free-flowing intersection
and 0 is the historical worst.
"""

from __future__ import annotations


def individual_delay(speed: float, v_max: float) -> float:
    """Linear delay in [0, 1] for one vehicle."""
    return 1.0 - speed / v_max


def total_squared_delay(speeds, v_max: float) -> float:
    """Sum of 1 - (v/v_max)^2 over the given speeds (incoming vehicles)."""
    inv = 1.0 / v_max
    total = 0.0
    for v in speeds:
        r = v * inv
        total += 1.0 - r * r
    return total


class RewardNormalizer:
    """r = 1 - tsd/peak with peak the running max of tsd (floor 1.0).

    The floor avoids division by zero on an empty network; the peak is
    updated before normalising, so rewards stay in [0, 1] and the historical
    worst step scores exactly 0. The peak persists across episodes for a
    whole training run.
    """

    __slots__ = ("peak",)

    def __init__(self, floor: float = 1.0):
        self.peak = floor

    def update(self, tsd: float) -> float:
        if tsd > self.peak:
            self.peak = tsd
        return 1.0 - tsd / self.peak


class DelayMeter:
    """Accumulates per-second total delay; mean() is the episode metric."""

    __slots__ = ("total", "steps")

    def __init__(self):
        self.total = 0.0
        self.steps = 0

    def add(self, step_delay_sum: float) -> None:
        self.total += step_delay_sum
        self.steps += 1

    def mean(self) -> float:
        return self.total / self.steps if self.steps else 0.0
