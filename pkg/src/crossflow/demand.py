"""Demand sampling and pre-generated arrival schedules.

Arrivals on each approach follow a Poisson process: exponential inter-arrival
times with mean 3600/q seconds for a demand of q veh/h. Each arriving vehicle
draws a connection (turn choice) proportionally to per-connection weights and
a connected-vehicle tag with probability ``cv_rate``.

Schedules are generated up front for a whole episode from dedicated child
streams (inter-arrival times, turn choices and CV tags each have their own),
so the exogenous traffic of an episode depends only on (scenario, demand,
seed) and is bit-identical no matter which controller runs the lights, and no
matter how ``cv_rate`` is overridden.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .geometry import Intersection
from .rng import RngStream

# Child-stream labels under an episode's root seed.
STREAM_ARRIVALS = 0
STREAM_TURNS = 1
STREAM_CV = 2
STREAM_POLICY = 3   # reserved for controllers (random baseline, exploration)

RATE_RANGE = (100.0, 1000.0)  # veh/h, sampled per approach


@dataclass(frozen=True)
class DemandConfig:
    """Per-episode demand description.

    rates: veh/h per approach (N, E, S, W).
    cv_rate: probability that a vehicle is connected (detectable).
    turn_weights: per approach, one positive weight per connection of that
        approach (ordering matches Intersection.approach_connections),
        normalised to sum to 1.
    """

    rates: tuple[float, float, float, float]
    cv_rate: float
    turn_weights: tuple[tuple[float, ...], ...]
    horizon: float = 3600.0

    def __post_init__(self):
        if len(self.rates) != 4:
            raise ValueError("need one rate per approach")
        if any(q < 0 for q in self.rates):
            raise ValueError("negative demand rate")
        if not 0.0 <= self.cv_rate <= 1.0:
            raise ValueError("cv_rate outside [0, 1]")
        if len(self.turn_weights) != 4:
            raise ValueError("need turn weights for all four approaches")
        for ws in self.turn_weights:
            if any(w <= 0 for w in ws):
                raise ValueError("turn weights must be positive")
            if abs(sum(ws) - 1.0) > 1e-9:
                raise ValueError("turn weights must sum to 1 per approach")

    def with_cv_rate(self, cv_rate: float) -> "DemandConfig":
        return replace(self, cv_rate=cv_rate)


def sample_demand(intersection: Intersection, rng: RngStream,
                  horizon: float = 3600.0) -> DemandConfig:
    """Draw a fresh episode demand: q ~ U[100, 1000] veh/h per approach,
    cv_rate ~ U[0, 1], one U(0, 1) weight per connection normalised per
    approach. Draw order is fixed for reproducibility."""
    cv_rate = rng.random()
    rates = tuple(rng.uniform(*RATE_RANGE) for _ in range(4))
    weights = []
    for a in range(4):
        raw = [rng.random() for _ in intersection.approach_connections(a)]
        # U(0,1) draws are almost surely positive; clamp defends the edge
        raw = [max(w, 1e-12) for w in raw]
        total = sum(raw)
        weights.append(tuple(w / total for w in raw))
    return DemandConfig(rates=rates, cv_rate=cv_rate,
                        turn_weights=tuple(weights), horizon=horizon)


@dataclass(frozen=True)
class Arrival:
    time: float
    approach: int
    movement: str
    is_cv: bool


def build_arrivals(intersection: Intersection, demand: DemandConfig,
                   root: RngStream) -> list[list[Arrival]]:
    """Pre-generate per-approach arrival lists for one episode."""
    out: list[list[Arrival]] = []
    for a in range(4):
        rng_t = root.child(STREAM_ARRIVALS, a)
        rng_turn = root.child(STREAM_TURNS, a)
        rng_cv = root.child(STREAM_CV, a)
        cons = intersection.approach_connections(a)
        weights = demand.turn_weights[a]
        arrivals: list[Arrival] = []
        q = demand.rates[a]
        if q > 0:
            mean_headway = 3600.0 / q
            t = rng_t.exponential(mean_headway)
            while t < demand.horizon:
                con = cons[rng_turn.weighted_index(weights)]
                is_cv = rng_cv.random() < demand.cv_rate
                arrivals.append(Arrival(t, a, con.movement, is_cv))
                t += rng_t.exponential(mean_headway)
        out.append(arrivals)
    return out
