"""Detection-grid state encoding.

The controller state is a float32 tensor of shape (3, rows, cells): one row
per incoming lane (approach-major N, E, S, W; curb lane first) and one column
per 8 m cell over the first 160 m upstream of the stop line (cell 0 touches
the line; the range is half-open, so a front bumper at exactly 160 m is not
detected).

Channels:

- presence: 1 where a detected (connected) vehicle's front bumper falls in
  the cell;
- speed: that vehicle's speed / v_max; when two detected vehicles fall into
  one cell the one nearer the stop line wins;
- signal: a whole lane row is 1 while the lane has a green movement, 0
  during yellow, all-red and foreign phases.

Only connected vehicles are visible here. Everything else in the simulator
(rewards, baseline controllers, metrics) reads the full state, never this
grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Intersection


@dataclass(frozen=True)
class GridSpec:
    cell_length: float = 8.0
    detection_range: float = 160.0

    def __post_init__(self):
        if self.cell_length <= 0:
            raise ValueError("cell_length must be positive")
        if self.detection_range <= 0:
            raise ValueError("detection_range must be positive")

    @property
    def n_cells(self) -> int:
        return int(self.detection_range / self.cell_length)


def state_shape(intersection: Intersection,
                spec: GridSpec = GridSpec()) -> tuple[int, int, int]:
    if spec.detection_range > intersection.approach_length:
        raise ValueError("detection range exceeds the approach length")
    return (3, intersection.n_incoming, spec.n_cells)


def encode_state(obs, spec: GridSpec = GridSpec()) -> np.ndarray:
    """Encode the CV detections of a live observation into the grid.

    ``obs`` needs: ``intersection``, ``v_max``, ``iter_lane(row)`` yielding
    vehicles nearest-first with ``pos``/``speed``/``is_cv`` fields, and
    ``lane_open(row)``.
    """
    inter = obs.intersection
    grid = np.zeros(state_shape(inter, spec), dtype=np.float32)
    presence, speed, signal = grid
    rng = spec.detection_range
    cell = spec.cell_length
    inv_vmax = 1.0 / obs.v_max
    for row in range(inter.n_incoming):
        for veh in obs.iter_lane(row):
            if veh.pos >= rng:
                break  # lanes are sorted nearest-first
            if not veh.is_cv:
                continue
            c = int(veh.pos / cell)
            if presence[row, c] == 0.0:
                speed[row, c] = veh.speed * inv_vmax
                presence[row, c] = 1.0
        if obs.lane_open(row):
            signal[row, :] = 1.0
    return grid


def render_grid(grid: np.ndarray, intersection: Intersection) -> str:
    """Human-readable dump of an encoded state (inspect-state command)."""
    names = ("presence", "speed", "signal")
    lines = []
    for ch, name in enumerate(names):
        lines.append(f"[{name}]")
        for row in range(grid.shape[1]):
            label = intersection.lane_label(row)
            if ch == 1:
                cells = " ".join(f"{v:4.2f}" for v in grid[ch, row])
            else:
                cells = " ".join(f"{int(v)}" for v in grid[ch, row])
            lines.append(f"  {label:>8} | {cells}")
    return "\n".join(lines)
