"""Signal controllers: fixed-time, random, Max Pressure and SOTL.

All controllers speak the same protocol:

- ``reset(intersection, timing, rng)`` before an episode;
- ``tick(obs)`` once every simulated second (most controllers ignore it;
  SOTL accumulates its demand counter here);
- ``decide(obs) -> int | None`` whenever the phase timer allows a decision.
  Returning a phase index applies it (the current phase extends the green);
  returning None leaves the decision point unconsumed, which is how SOTL
  holds its green at one-second granularity.
"""

from __future__ import annotations

from .geometry import Intersection
from .rng import RngStream
from .signals import SignalTiming


class Controller:
    name = "base"

    def reset(self, intersection: Intersection, timing: SignalTiming,
              rng: RngStream | None = None) -> None:
        pass

    def tick(self, obs) -> None:
        pass

    def decide(self, obs):
        raise NotImplementedError


class FixedTimeController(Controller):
    """Cyclic phases with a fixed green duration (default 30 s).

    Decisions only exist every min_green seconds, so the effective green is
    the first decision point at or past the configured duration.
    """

    name = "fixed"

    def __init__(self, green: float = 30.0):
        self.green = green

    def decide(self, obs) -> int:
        if obs.green_elapsed >= self.green - 1e-9:
            return (obs.phase + 1) % obs.n_phases
        return obs.phase


class RandomController(Controller):
    """Uniform random phase at every decision point."""

    name = "random"

    def __init__(self):
        self._rng: RngStream | None = None

    def reset(self, intersection, timing, rng=None):
        if rng is None:
            raise ValueError("random controller needs an RngStream")
        self._rng = rng

    def decide(self, obs) -> int:
        return self._rng.integers(obs.n_phases)


class MaxPressureController(Controller):
    """Greedy pressure release with full detection.

    A phase's pressure is the number of vehicles on the incoming lanes it
    serves minus the number on the outgoing lanes those connections feed
    (lane sets, so shared lanes count once). The highest-pressure phase wins;
    ties go to the lowest phase index.
    """

    name = "max_pressure"

    def __init__(self):
        self._in_rows: list[tuple[int, ...]] = []
        self._out_rows: list[tuple[int, ...]] = []

    def reset(self, intersection, timing, rng=None):
        self._in_rows = [intersection.phase_incoming_rows(p)
                         for p in range(intersection.n_phases)]
        self._out_rows = [intersection.phase_outgoing_rows(p)
                          for p in range(intersection.n_phases)]

    def pressures(self, obs) -> list[float]:
        vals = []
        for p in range(obs.n_phases):
            inc = sum(obs.in_count(r) for r in self._in_rows[p])
            out = sum(obs.out_count(r) for r in self._out_rows[p])
            vals.append(float(inc - out))
        return vals

    def decide(self, obs) -> int:
        vals = self.pressures(obs)
        best = 0
        for p in range(1, len(vals)):
            if vals[p] > vals[best]:
                best = p
        return best


class SOTLController(Controller):
    """Self-organising traffic lights.

    Every second the demand counter grows by the number of vehicles within
    ``demand_radius`` of the stop line on lanes *not* served by the current
    phase (it keeps accumulating through yellow and all-red). Once the green
    has run at least min_green and the counter exceeds ``demand_threshold``,
    the phase advances cyclically unless a small platoon (1..platoon_limit
    vehicles within ``platoon_radius`` on the served lanes) is about to
    clear, in which case the green holds to avoid cutting it. The counter
    resets when the change fires.
    """

    name = "sotl"

    def __init__(self, demand_threshold: float = 50.0,
                 platoon_limit: int = 3, demand_radius: float = 80.0,
                 platoon_radius: float = 25.0):
        self.demand_threshold = demand_threshold
        self.platoon_limit = platoon_limit
        self.demand_radius = demand_radius
        self.platoon_radius = platoon_radius
        self.demand_count = 0.0
        self._phase_rows: list[frozenset[int]] = []
        self._all_rows: tuple[int, ...] = ()

    def reset(self, intersection, timing, rng=None):
        self.demand_count = 0.0
        self._phase_rows = [frozenset(intersection.phase_incoming_rows(p))
                            for p in range(intersection.n_phases)]
        self._all_rows = tuple(range(intersection.n_incoming))

    def tick(self, obs) -> None:
        served = self._phase_rows[obs.phase]
        for row in self._all_rows:
            if row not in served:
                self.demand_count += obs.count_within(row, self.demand_radius)

    def decide(self, obs):
        if self.demand_count <= self.demand_threshold:
            return None
        served = self._phase_rows[obs.phase]
        platoon = sum(obs.count_within(r, self.platoon_radius)
                      for r in served)
        if platoon == 0 or platoon > self.platoon_limit:
            self.demand_count = 0.0
            return (obs.phase + 1) % obs.n_phases
        return None


BASELINES = {
    "fixed": FixedTimeController,
    "random": RandomController,
    "max_pressure": MaxPressureController,
    "sotl": SOTLController,
}
