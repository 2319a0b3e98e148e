"""Single-intersection traffic simulation.

Space is one-dimensional per lane: a vehicle's ``pos`` is the distance (m)
from its front bumper to the downstream end of its current lane (the stop
line on incoming lanes, the network exit on outgoing lanes), so ``pos``
decreases as the vehicle advances and each lane's vehicle list stays sorted
front first.

Car following is a Krauss-style safe-speed update with dt = 1 s:

    v_next = max(0, min(v + a*dt, v_max, v_safe))

where v_safe is the largest speed whose travel this step plus worst-case
braking distance (decel b per second) fits into the available headway plus
the leader's own worst-case braking distance. Starting from any state where
every follower could stop behind its braking leader, this update keeps gaps
at or above ``MIN_GAP`` forever and never demands a deceleration above b;
the gap and braking invariants are asserted by the test suite rather than
trusted.

The junction box has zero length: once a vehicle's front would pass the stop
line on an open connection it transfers atomically to the same-index outgoing
lane of its destination approach. Permissive left turns (scenario "a") always
approach the line as if it were closed and cross only in a step where the
opposing through traffic leaves a 3 s gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .demand import Arrival, DemandConfig, build_arrivals
from .geometry import Intersection, THROUGH, _MOVEMENT_OFFSET
from .rng import RngStream
from .signals import (PhaseTimer, SignalTiming, STAGE_GREEN, STAGE_CHANGE,
                      STAGE_CLEARANCE)

DT = 1.0                 # s, simulation step
ACCEL = 2.6              # m/s^2
DECEL = 4.5              # m/s^2, comfortable braking bound
VEHICLE_LENGTH = 5.0     # m
MIN_GAP = 2.5            # m, bumper-to-bumper at standstill

_BDT = DECEL * DT
_BDT2 = DECEL * DT * DT
_ADT = ACCEL * DT
_FAR = 1e9

# Signal state per incoming lane for one step.
SIG_CLOSED = 0
SIG_OPEN = 1
SIG_YELLOW = 2


def stopping_distance(v: float) -> float:
    """Distance covered after this step when braking at DECEL every step."""
    n = int(v / _BDT)
    return DT * (n * v - _BDT * n * (n + 1) * 0.5)


def safe_speed(headroom: float) -> float:
    """Largest v whose travel this step plus stopping distance fits headroom.

    Inverts  A(v) = v*dt + stopping_distance(v)  on its piecewise-linear
    pieces; the piece index is repaired once against float round-off at the
    breakpoints.
    """
    if headroom <= 0.0:
        return 0.0
    if headroom > 1e6:
        return 1e6
    n = int(0.5 * (math.sqrt(1.0 + 8.0 * headroom / _BDT2) - 1.0))
    v = headroom / ((n + 1) * DT) + 0.5 * _BDT * n
    if n > 0 and v < n * _BDT:
        n -= 1
        v = headroom / ((n + 1) * DT) + 0.5 * _BDT * n
    elif v >= (n + 1) * _BDT:
        n += 1
        v = headroom / ((n + 1) * DT) + 0.5 * _BDT * n
    return v


class Vehicle:
    __slots__ = ("vid", "pos", "speed", "length", "is_cv", "movement",
                 "src", "out_row", "arrival_t", "inserted_t")

    def __init__(self, vid: int, pos: float, speed: float, is_cv: bool,
                 movement: str, src: int, out_row: int, arrival_t: float,
                 inserted_t: float):
        self.vid = vid
        self.pos = pos
        self.speed = speed
        self.length = VEHICLE_LENGTH
        self.is_cv = is_cv
        self.movement = movement
        self.src = src
        self.out_row = out_row
        self.arrival_t = arrival_t
        self.inserted_t = inserted_t


@dataclass
class SimEvents:
    """What one step produced, plus per-step aggregates."""

    time: float
    inserted: list[Vehicle] = field(default_factory=list)
    exited: list[Vehicle] = field(default_factory=list)
    forced_advance: bool = False
    delay_sum: float = 0.0    # sum of (1 - v/v_max) over in-network vehicles
    tsd: float = 0.0          # sum of (1 - (v/v_max)^2) over incoming vehicles
    queue: int = 0            # stopped vehicles on incoming lanes
    n_vehicles: int = 0


class EventRecorder:
    """Collects an episode's events as CSV rows (deterministic bytes)."""

    HEADER = "t,event,vehicle_id,is_cv,lane,pos,speed,phase,stage"

    def __init__(self, motion: bool = False):
        self.motion = motion
        self.rows: list[str] = [self.HEADER]

    def vehicle(self, t: float, event: str, veh: Vehicle, lane: str,
                phase: int, stage: str) -> None:
        self.rows.append(
            f"{t:.1f},{event},{veh.vid},{int(veh.is_cv)},{lane},"
            f"{veh.pos:.6f},{veh.speed:.6f},{phase},{stage}")

    def signal(self, t: float, event: str, phase: int, stage: str) -> None:
        self.rows.append(f"{t:.1f},{event},,,,,,{phase},{stage}")

    def to_bytes(self) -> bytes:
        return ("\n".join(self.rows) + "\n").encode()

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())


class Observation:
    """Read-only view of the live simulator state.

    The full view (all vehicles) feeds rewards, baselines and metrics; the
    network's state encoder must only consume the CV detections.
    """

    __slots__ = ("sim",)

    def __init__(self, sim: "TrafficSim"):
        self.sim = sim

    @property
    def time(self) -> float:
        return self.sim.time

    @property
    def intersection(self) -> Intersection:
        return self.sim.intersection

    @property
    def v_max(self) -> float:
        return self.sim.v_max

    @property
    def n_phases(self) -> int:
        return self.sim.intersection.n_phases

    @property
    def phase(self) -> int:
        return self.sim.timer.phase

    @property
    def stage(self) -> str:
        return self.sim.timer.stage

    @property
    def green_elapsed(self) -> float:
        return self.sim.timer.green_elapsed

    def lane_open(self, row: int) -> bool:
        return self.sim.signal_states()[row] == SIG_OPEN

    def in_count(self, row: int) -> int:
        return len(self.sim.lanes_in[row])

    def out_count(self, row: int) -> int:
        return len(self.sim.lanes_out[row])

    def count_within(self, row: int, dist: float) -> int:
        """Incoming vehicles with front within dist of the stop line."""
        n = 0
        for veh in self.sim.lanes_in[row]:
            if veh.pos >= dist:
                break
            n += 1
        return n

    def iter_lane(self, row: int):
        """Incoming vehicles of one lane, nearest the stop line first."""
        return iter(self.sim.lanes_in[row])

    def vehicles(self) -> list[Vehicle]:
        out = []
        for lane in self.sim.lanes_in:
            out.extend(lane)
        for lane in self.sim.lanes_out:
            out.extend(lane)
        return out

    def cv_vehicles(self) -> list[Vehicle]:
        return [v for lane in self.sim.lanes_in for v in lane if v.is_cv]


class TrafficSim:
    """The per-second simulation loop for one episode."""

    def __init__(self, intersection: Intersection, demand: DemandConfig,
                 seed: int, timing: SignalTiming | None = None,
                 recorder: EventRecorder | None = None):
        self.intersection = intersection
        self.demand = demand
        self.seed = int(seed)
        self.timing = timing or SignalTiming()
        self.recorder = recorder
        self.v_max = intersection.v_max
        self.lane_length = intersection.approach_length
        self.timer = PhaseTimer(intersection.n_phases, self.timing)
        self.time = 0.0

        n_rows = intersection.n_incoming
        self.lanes_in: list[list[Vehicle]] = [[] for _ in range(n_rows)]
        self.lanes_out: list[list[Vehicle]] = [[] for _ in range(n_rows)]
        self.pending: list[list[Vehicle]] = [[] for _ in range(4)]

        root = RngStream(self.seed)
        self._arrivals = build_arrivals(intersection, demand, root)
        self._arrival_ptr = [0, 0, 0, 0]
        self._next_vid = 0

        # lifetime counters (conservation invariants)
        self.n_arrived = 0
        self.n_inserted = 0
        self.n_exited = 0

        self._obs = Observation(self)
        self._sig_cache: list[int] | None = None
        self._build_static_maps()

    # -- static per-scenario lookups ----------------------------------------

    def _build_static_maps(self) -> None:
        inter = self.intersection
        n = inter.lanes_per_approach
        self._phase_rows: list[frozenset[int]] = [
            frozenset(inter.phase_incoming_rows(p))
            for p in range(inter.n_phases)]
        # rows whose connections are all permissive (dedicated left lanes in
        # scenario "a"); mixed rows do not occur in the built-in layouts
        self._permissive_rows = frozenset(
            inter.lane_row(c.src, c.lane)
            for c in inter.connections if c.permissive)
        # rows carrying opposing through traffic, per source approach
        self._opposing_through_rows: list[tuple[int, ...]] = []
        for a in range(4):
            opp = (a + 2) % 4
            rows = tuple(inter.lane_row(opp, l) for l in range(n)
                         if THROUGH in inter.lane_movements[l])
            self._opposing_through_rows.append(rows)
        # movement -> compatible lane indices, for insertion
        self._movement_lanes: dict[str, tuple[int, ...]] = {}
        for m in (c.movement for c in inter.connections):
            self._movement_lanes[m] = tuple(
                i for i, moves in enumerate(inter.lane_movements)
                if m in moves)

    # -- signal state ---------------------------------------------------------

    def signal_states(self) -> list[int]:
        """Per incoming row: SIG_OPEN, SIG_YELLOW or SIG_CLOSED."""
        if self._sig_cache is None:
            timer = self.timer
            states = [SIG_CLOSED] * self.intersection.n_incoming
            if timer.stage == STAGE_GREEN:
                for row in self._phase_rows[timer.phase]:
                    states[row] = SIG_OPEN
            elif timer.stage == STAGE_CHANGE:
                for row in self._phase_rows[timer.phase]:
                    states[row] = SIG_YELLOW
            self._sig_cache = states
        return self._sig_cache

    # -- control interface ----------------------------------------------------

    def decision_ready(self) -> bool:
        return self.timer.decision_ready()

    def apply_action(self, phase: int) -> None:
        changed = self.timer.apply(phase)
        self._sig_cache = None
        if self.recorder is not None:
            self.recorder.signal(self.time, "decision", phase,
                                 self.timer.stage)
        if changed:
            pass  # stage events are recorded by the tick below

    def resolve_forced_advance(self) -> bool:
        """Apply the max-green cyclic advance if due. Call once per second."""
        if self.timer.forced_advance_due():
            target = self.timer.force_advance()
            self._sig_cache = None
            if self.recorder is not None:
                self.recorder.signal(self.time, "forced_advance", target,
                                     self.timer.stage)
            return True
        return False

    def observe(self) -> Observation:
        return self._obs

    # -- vehicle accounting ----------------------------------------------------

    @property
    def n_pending(self) -> int:
        return sum(len(q) for q in self.pending)

    @property
    def n_in_network(self) -> int:
        return (sum(len(l) for l in self.lanes_in)
                + sum(len(l) for l in self.lanes_out))

    def step_tsd(self) -> float:
        """Total squared delay of the current state (incoming vehicles)."""
        inv = 1.0 / self.v_max
        total = 0.0
        for lane in self.lanes_in:
            for veh in lane:
                r = veh.speed * inv
                total += 1.0 - r * r
        return total

    # -- stepping ---------------------------------------------------------------

    def step(self) -> SimEvents:
        ev = SimEvents(time=self.time)
        self._pull_arrivals()
        self._insert_pending(ev)
        sig = self.signal_states()
        inv_vmax = 1.0 / self.v_max

        delay = 0.0
        tsd = 0.0
        queue = 0
        for row in range(len(self.lanes_out)):
            delay += self._update_outgoing(row, ev)
        for row in range(len(self.lanes_in)):
            d, t, q = self._update_incoming(row, sig[row])
            delay += d
            tsd += t
            queue += q

        prev_stage = self.timer.stage
        self.timer.tick(DT)
        if self.timer.stage != prev_stage:
            self._sig_cache = None
            if self.recorder is not None:
                self.recorder.signal(self.time + DT, "stage",
                                     self.timer.phase, self.timer.stage)
        self.time += DT

        ev.delay_sum = delay * inv_vmax  # accumulated as v-sums, see below
        ev.tsd = tsd
        ev.queue = queue
        ev.n_vehicles = self.n_in_network
        if self.recorder is not None and self.recorder.motion:
            self._record_motion()
        return ev

    # The lane updates accumulate sum(v_max - v) so the hot loop avoids one
    # divide per vehicle; step() multiplies by 1/v_max once.

    def _pull_arrivals(self) -> None:
        horizon = self.time + DT
        for a in range(4):
            arrivals = self._arrivals[a]
            i = self._arrival_ptr[a]
            while i < len(arrivals) and arrivals[i].time < horizon:
                self._spawn(arrivals[i])
                i += 1
            self._arrival_ptr[a] = i

    def _spawn(self, arr: Arrival) -> None:
        # out_row is fixed at insertion, once the lane (and thus the
        # same-index outgoing lane) is known
        veh = Vehicle(
            vid=self._next_vid, pos=self.lane_length, speed=0.0,
            is_cv=arr.is_cv, movement=arr.movement, src=arr.approach,
            out_row=0, arrival_t=arr.time, inserted_t=-1.0)
        self._next_vid += 1
        self.n_arrived += 1
        self.pending[arr.approach].append(veh)

    def _insert_pending(self, ev: SimEvents) -> None:
        inter = self.intersection
        n = inter.lanes_per_approach
        length = self.lane_length
        for a in range(4):
            queue = self.pending[a]
            while queue:
                veh = queue[0]
                lanes = self._movement_lanes[veh.movement]
                order = sorted(lanes,
                               key=lambda i: (len(self.lanes_in[a * n + i]), i))
                placed = False
                for lane_idx in order:
                    row = a * n + lane_idx
                    lane = self.lanes_in[row]
                    if lane:
                        tail = lane[-1]
                        headroom = (length - tail.pos - tail.length - MIN_GAP
                                    + stopping_distance(tail.speed))
                        if length - tail.pos - tail.length < MIN_GAP:
                            continue  # entry blocked
                        v0 = min(self.v_max, safe_speed(max(headroom, 0.0)))
                    else:
                        v0 = self.v_max
                    veh.pos = length
                    veh.speed = v0
                    dst = (a + _MOVEMENT_OFFSET[veh.movement]) % 4
                    veh.out_row = dst * n + lane_idx
                    veh.inserted_t = self.time
                    lane.append(veh)
                    queue.pop(0)
                    self.n_inserted += 1
                    ev.inserted.append(veh)
                    if self.recorder is not None:
                        self.recorder.vehicle(
                            self.time, "insert", veh,
                            inter.lane_label(row), self.timer.phase,
                            self.timer.stage)
                    placed = True
                    break
                if not placed:
                    break  # FIFO per approach: head of line blocks the rest

    def _update_outgoing(self, row: int, ev: SimEvents) -> float:
        lane = self.lanes_out[row]
        if not lane:
            return 0.0
        vmax = self.v_max
        vsum = 0.0
        exits = 0
        prev_pos = -_FAR  # exited leaders keep constraining this step
        prev_speed = 0.0
        prev_len = 0.0
        leader = False
        for veh in lane:
            v = veh.speed + _ADT
            if v > vmax:
                v = vmax
            if leader:
                headroom = (veh.pos - prev_pos - prev_len - MIN_GAP
                            + stopping_distance(prev_speed))
                vs = safe_speed(headroom)
                if vs < v:
                    v = vs
            if v < 0.0:
                v = 0.0
            veh.speed = v
            veh.pos -= v * DT
            prev_pos, prev_speed, prev_len = veh.pos, v, veh.length
            leader = True
            if veh.pos <= 1e-9:
                exits += 1
            else:
                vsum += vmax - v
        for _ in range(exits):
            veh = lane.pop(0)
            self.n_exited += 1
            ev.exited.append(veh)
            if self.recorder is not None:
                self.recorder.vehicle(
                    self.time, "exit", veh,
                    self.intersection.lane_label(veh.out_row, incoming=False),
                    self.timer.phase, self.timer.stage)
        return vsum

    def _update_incoming(self, row: int, sig: int) -> tuple[float, float, int]:
        lane = self.lanes_in[row]
        if not lane:
            return 0.0, 0.0, 0
        vmax = self.v_max
        inv_vmax = 1.0 / vmax
        permissive = row in self._permissive_rows
        approach = row // self.intersection.lanes_per_approach
        vsum = 0.0
        tsd = 0.0
        queue = 0
        crossed: list[Vehicle] = []
        prev: Vehicle | None = None
        for veh in list(lane):
            if prev is None:
                res = self._update_head(veh, sig, permissive, approach)
                if res:
                    crossed.append(veh)
                    vsum += vmax - veh.speed
                    continue  # next vehicle becomes head
                prev = veh
            else:
                v = veh.speed + _ADT
                if v > vmax:
                    v = vmax
                headroom = (veh.pos - prev.pos - prev.length - MIN_GAP
                            + stopping_distance(prev.speed))
                vs = safe_speed(headroom)
                if vs < v:
                    v = vs
                if v < 0.0:
                    v = 0.0
                veh.speed = v
                veh.pos -= v * DT
                prev = veh
            v = veh.speed
            vsum += vmax - v
            r = v * inv_vmax
            tsd += 1.0 - r * r
            if v < 0.1:
                queue += 1
        if crossed:
            # _transfer already appended them to their outgoing lanes (the
            # next head must see them as its junction leader within this
            # step); crossings always come off the front of the lane
            del lane[:len(crossed)]
        return vsum, tsd, queue

    def _update_head(self, veh: Vehicle, sig: int, permissive: bool,
                     approach: int) -> bool:
        """Update the lane's front vehicle. Returns True when it crossed."""
        vmax = self.v_max
        pos = veh.pos
        if sig == SIG_OPEN or sig == SIG_YELLOW:
            if sig == SIG_YELLOW:
                # stop if a comfortable stop is still possible
                vstop = safe_speed(pos)
                if vstop >= veh.speed - _BDT - 1e-9:
                    return self._barrier_update(veh, vstop)
            v = veh.speed + _ADT
            if v > vmax:
                v = vmax
            vs = safe_speed(self._junction_headroom(veh))
            if vs < v:
                v = vs
            if v < 0.0:
                v = 0.0
            if permissive:
                if pos - v * DT < -1e-12 and self._gap_accepted(approach):
                    self._transfer(veh, v)
                    return True
                return self._barrier_update(veh, safe_speed(pos))
            if pos - v * DT < -1e-12:
                self._transfer(veh, v)
                return True
            veh.speed = v
            veh.pos = pos - v * DT
            return False
        return self._barrier_update(veh, safe_speed(pos))

    def _barrier_update(self, veh: Vehicle, vstop: float) -> bool:
        v = veh.speed + _ADT
        if v > self.v_max:
            v = self.v_max
        if vstop < v:
            v = vstop
        if v < 0.0:
            v = 0.0
        veh.speed = v
        veh.pos -= v * DT
        return False

    def _junction_headroom(self, veh: Vehicle) -> float:
        """Headroom across the junction to the target outgoing lane's tail.

        The tail's rear is treated as a standing wall, with no credit for
        its own stopping distance. Outgoing lanes advance before incoming
        ones each step, so a vehicle crossing at a speed within this bound
        always lands at least MIN_GAP behind the tail; the anticipatory
        form would let it land closer whenever the tail is faster.
        """
        out = self.lanes_out[veh.out_row]
        if not out:
            return _FAR
        tail = out[-1]
        return (veh.pos + (self.lane_length - tail.pos)
                - tail.length - MIN_GAP)

    def _gap_accepted(self, approach: int) -> bool:
        """3 s clear gap of opposing through traffic for a permissive left."""
        limit = 3.0 * self.v_max
        for row in self._opposing_through_rows[approach]:
            for ov in self.lanes_in[row]:
                if ov.pos >= limit:
                    break
                if ov.movement != THROUGH:
                    continue
                if ov.pos < 5.0:
                    return False
                speed = ov.speed if ov.speed > 1.0 else 1.0
                if ov.pos / speed < 3.0:
                    return False
        return True

    def _transfer(self, veh: Vehicle, v: float) -> None:
        overshoot = v * DT - veh.pos
        veh.speed = v
        veh.pos = self.lane_length - overshoot
        self.lanes_out[veh.out_row].append(veh)
        # caller removes the vehicle from its incoming lane

    def _record_motion(self) -> None:
        rec = self.recorder
        inter = self.intersection
        for row, lane in enumerate(self.lanes_in):
            label = inter.lane_label(row)
            for veh in lane:
                rec.vehicle(self.time, "move", veh, label,
                            self.timer.phase, self.timer.stage)
        for row, lane in enumerate(self.lanes_out):
            label = inter.lane_label(row, incoming=False)
            for veh in lane:
                rec.vehicle(self.time, "move", veh, label,
                            self.timer.phase, self.timer.stage)

    # -- invariants (test support) ---------------------------------------------

    def check_invariants(self) -> None:
        """Gap, ordering and conservation invariants; raises on violation."""
        if self.n_arrived != self.n_inserted + self.n_pending:
            raise AssertionError("arrival conservation violated")
        if self.n_inserted != self.n_in_network + self.n_exited:
            raise AssertionError("insertion conservation violated")
        for group in (self.lanes_in, self.lanes_out):
            for lane in group:
                for ahead, behind in zip(lane, lane[1:]):
                    gap = behind.pos - ahead.pos - ahead.length
                    if gap < MIN_GAP - 1e-6:
                        raise AssertionError(
                            f"gap violation: {gap:.6f} m between "
                            f"{ahead.vid} and {behind.vid}")
