"""Intersection geometry: approaches, lanes, connections and phase programs.

A single four-leg intersection. Traffic on each approach drives toward the
stop line on `lanes_per_approach` incoming lanes and leaves on the same number
of outgoing lanes. A connection joins an incoming lane to the same-index
outgoing lane of the destination approach; phases are sets of connections that
may move together.

Three built-in layouts:

- ``a``: 2 lanes per approach, two phases. Each phase releases every movement
  of one axis; left turns are permissive (they yield to opposing through
  traffic).
- ``b``: 3 lanes per approach, four phases with protected left turns.
- ``c``: 4 lanes per approach (two dedicated left lanes), four phases with
  protected left turns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

APPROACH_NAMES = ("N", "E", "S", "W")

LEFT = "left"
THROUGH = "through"
RIGHT = "right"

# Offset (destination - source) mod 4 for each movement, with approaches
# ordered N, E, S, W. A vehicle arriving from the north heads south, so its
# left turn exits on the east leg: offset 1.
_MOVEMENT_OFFSET = {LEFT: 1, THROUGH: 2, RIGHT: 3}


def movement_between(src: int, dst: int) -> str:
    d = (dst - src) % 4
    for name, off in _MOVEMENT_OFFSET.items():
        if d == off:
            return name
    raise ValueError(f"no movement between approach {src} and {dst}")


@dataclass(frozen=True)
class Connection:
    """One incoming lane's path to the same-index outgoing lane of dst."""

    src: int            # source approach index
    lane: int           # lane index from the curb on the source approach
    dst: int            # destination approach index
    movement: str
    permissive: bool = False  # green but must yield to opposing through

    @property
    def label(self) -> str:
        return (f"{APPROACH_NAMES[self.src]}{self.lane}"
                f"->{APPROACH_NAMES[self.dst]}{self.lane}")


@dataclass(frozen=True)
class Phase:
    """A set of connections that are green together."""

    index: int
    connections: tuple[Connection, ...]


def _lane_movements(n_lanes: int) -> list[tuple[str, ...]]:
    """Movement sets per lane, curb (index 0) to median."""
    if n_lanes == 2:
        return [(THROUGH, RIGHT), (LEFT,)]
    if n_lanes == 3:
        return [(THROUGH, RIGHT), (THROUGH,), (LEFT,)]
    if n_lanes == 4:
        return [(THROUGH, RIGHT), (THROUGH,), (LEFT,), (LEFT,)]
    raise ValueError(f"unsupported lane count {n_lanes}")


@dataclass
class Intersection:
    scenario: str
    lanes_per_approach: int
    approach_length: float
    v_max: float
    connections: list[Connection]
    phases: list[Phase]
    lane_movements: list[tuple[str, ...]] = field(default_factory=list)

    # -- lane indexing -----------------------------------------------------
    # Incoming and outgoing lanes each get a global row index:
    # approach-major, curb first (N lanes, then E, S, W).

    @property
    def n_incoming(self) -> int:
        return 4 * self.lanes_per_approach

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    def lane_row(self, approach: int, lane: int) -> int:
        return approach * self.lanes_per_approach + lane

    def lane_label(self, row: int, incoming: bool = True) -> str:
        approach, lane = divmod(row, self.lanes_per_approach)
        kind = "in" if incoming else "out"
        return f"{APPROACH_NAMES[approach]}-{kind}-{lane}"

    # -- derived phase structure --------------------------------------------

    def approach_connections(self, approach: int) -> list[Connection]:
        return [c for c in self.connections if c.src == approach]

    def phase_incoming_rows(self, phase: int) -> tuple[int, ...]:
        rows = {self.lane_row(c.src, c.lane)
                for c in self.phases[phase].connections}
        return tuple(sorted(rows))

    def phase_outgoing_rows(self, phase: int) -> tuple[int, ...]:
        rows = {self.lane_row(c.dst, c.lane)
                for c in self.phases[phase].connections}
        return tuple(sorted(rows))

    def row_connections(self, row: int) -> list[Connection]:
        approach, lane = divmod(row, self.lanes_per_approach)
        return [c for c in self.connections
                if c.src == approach and c.lane == lane]

    def validate(self) -> None:
        n = self.lanes_per_approach
        served = {(c.src, c.lane) for c in self.connections}
        for a in range(4):
            for l in range(n):
                if (a, l) not in served:
                    raise ValueError(f"incoming lane {a}/{l} has no connection")
        for c in self.connections:
            if movement_between(c.src, c.dst) != c.movement:
                raise ValueError(f"connection {c.label} mislabeled")
        for p in self.phases:
            axes = {c.src % 2 for c in p.connections}
            if len(axes) != 1:
                raise ValueError(f"phase {p.index} mixes axes")
            # No two simultaneously green connections may feed one outgoing
            # lane, and a left may only share a phase with opposing through
            # traffic when it is permissive.
            targets = [(c.dst, c.lane) for c in p.connections]
            if len(targets) != len(set(targets)):
                raise ValueError(f"phase {p.index} double-feeds a lane")
            has_through = {c.src for c in p.connections
                           if c.movement == THROUGH}
            for c in p.connections:
                if (c.movement == LEFT and not c.permissive
                        and (c.src + 2) % 4 in has_through):
                    raise ValueError(
                        f"phase {p.index}: protected left {c.label} crosses "
                        f"opposing through traffic")


def _build_connections(scenario: str, n_lanes: int) -> list[Connection]:
    moves = _lane_movements(n_lanes)
    cons = []
    for a in range(4):
        for lane, lane_moves in enumerate(moves):
            for m in lane_moves:
                dst = (a + _MOVEMENT_OFFSET[m]) % 4
                cons.append(Connection(
                    src=a, lane=lane, dst=dst, movement=m,
                    permissive=(scenario == "a" and m == LEFT)))
    return cons


def _build_phases(scenario: str, cons: list[Connection]) -> list[Phase]:
    ns = (0, 2)  # north/south axis
    ew = (1, 3)
    if scenario == "a":
        groups = [
            [c for c in cons if c.src in ns],
            [c for c in cons if c.src in ew],
        ]
    else:
        groups = [
            [c for c in cons if c.src in ns and c.movement != LEFT],
            [c for c in cons if c.src in ns and c.movement == LEFT],
            [c for c in cons if c.src in ew and c.movement != LEFT],
            [c for c in cons if c.src in ew and c.movement == LEFT],
        ]
    return [Phase(i, tuple(g)) for i, g in enumerate(groups)]


SCENARIOS = {
    "a": {"lanes_per_approach": 2, "n_phases": 2},
    "b": {"lanes_per_approach": 3, "n_phases": 4},
    "c": {"lanes_per_approach": 4, "n_phases": 4},
}


def build_scenario(tag: str, approach_length: float = 300.0,
                   v_max: float = 13.89) -> Intersection:
    """Construct one of the built-in intersection layouts ("a", "b", "c")."""
    if tag not in SCENARIOS:
        raise ValueError(f"unknown scenario {tag!r}; pick one of a, b, c")
    n_lanes = SCENARIOS[tag]["lanes_per_approach"]
    cons = _build_connections(tag, n_lanes)
    phases = _build_phases(tag, cons)
    inter = Intersection(
        scenario=tag,
        lanes_per_approach=n_lanes,
        approach_length=approach_length,
        v_max=v_max,
        connections=cons,
        phases=phases,
        lane_movements=_lane_movements(n_lanes),
    )
    inter.validate()
    return inter
