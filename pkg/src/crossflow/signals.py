"""Signal phase state machine.

A phase's life cycle is green -> change (yellow) -> clearance (all red) ->
next phase's green. Control decisions are only legal while the stage is green
and at least ``min_green`` seconds of green have passed since the previous
decision; choosing the current phase again extends the green by another
``min_green``, choosing a different phase starts the change stage. When
``max_green`` is set the simulator forces a cyclic advance the second the
green reaches it.
"""

from __future__ import annotations

from dataclasses import dataclass

STAGE_GREEN = "green"
STAGE_CHANGE = "change"
STAGE_CLEARANCE = "clearance"

_EPS = 1e-9


@dataclass(frozen=True)
class SignalTiming:
    min_green: float = 10.0
    yellow: float = 3.0
    all_red: float = 2.0
    max_green: float | None = None  # None disables the forced advance

    def __post_init__(self):
        if self.min_green <= 0 or self.yellow < 0 or self.all_red < 0:
            raise ValueError("signal durations must be positive")
        if self.max_green is not None and self.max_green < self.min_green:
            raise ValueError("max_green must be >= min_green")


class PhaseTimer:
    """Tracks the current phase, its stage and the decision gate."""

    __slots__ = ("n_phases", "timing", "phase", "stage", "stage_elapsed",
                 "green_elapsed", "green_since_decision", "_pending")

    def __init__(self, n_phases: int, timing: SignalTiming,
                 start_phase: int = 0):
        if not 0 <= start_phase < n_phases:
            raise ValueError("start phase out of range")
        self.n_phases = n_phases
        self.timing = timing
        self.phase = start_phase
        self.stage = STAGE_GREEN
        self.stage_elapsed = 0.0
        self.green_elapsed = 0.0
        self.green_since_decision = 0.0
        self._pending = start_phase

    # -- queries -------------------------------------------------------------

    def decision_ready(self) -> bool:
        return (self.stage == STAGE_GREEN
                and self.green_since_decision >= self.timing.min_green - _EPS)

    def forced_advance_due(self) -> bool:
        mg = self.timing.max_green
        return (mg is not None and self.stage == STAGE_GREEN
                and self.green_elapsed >= mg - _EPS)

    def green_phase(self) -> int | None:
        """Phase currently showing green, or None during change/clearance."""
        return self.phase if self.stage == STAGE_GREEN else None

    def yellow_phase(self) -> int | None:
        """Phase currently showing yellow, or None outside the change stage."""
        return self.phase if self.stage == STAGE_CHANGE else None

    # -- transitions ---------------------------------------------------------

    def apply(self, phase: int) -> bool:
        """Apply a control decision. Returns True when a change was started."""
        if not 0 <= phase < self.n_phases:
            raise ValueError(f"phase {phase} out of range")
        if not self.decision_ready():
            raise RuntimeError(
                f"decision outside a legal decision point (stage={self.stage},"
                f" green_since_decision={self.green_since_decision:.1f})")
        if phase == self.phase:
            self.green_since_decision = 0.0  # extend by another min_green
            return False
        self._begin_change(phase)
        return True

    def force_advance(self) -> int:
        """Cyclic advance once the green hits max_green. Returns new target."""
        if not self.forced_advance_due():
            raise RuntimeError("forced advance without max_green elapsed")
        target = (self.phase + 1) % self.n_phases
        self._begin_change(target)
        return target

    def _begin_change(self, target: int) -> None:
        self._pending = target
        self.stage = STAGE_CHANGE
        self.stage_elapsed = 0.0

    def tick(self, dt: float = 1.0) -> None:
        self.stage_elapsed += dt
        if self.stage == STAGE_GREEN:
            self.green_elapsed += dt
            self.green_since_decision += dt
            return
        if self.stage == STAGE_CHANGE:
            if self.stage_elapsed >= self.timing.yellow - _EPS:
                carry = self.stage_elapsed - self.timing.yellow
                self.stage = STAGE_CLEARANCE
                self.stage_elapsed = carry
                # handle zero-length all-red without losing the carry
                if self.stage_elapsed >= self.timing.all_red - _EPS:
                    self._begin_green()
            return
        if self.stage == STAGE_CLEARANCE:
            if self.stage_elapsed >= self.timing.all_red - _EPS:
                self._begin_green()

    def _begin_green(self) -> None:
        carry = self.stage_elapsed - self.timing.all_red
        self.phase = self._pending
        self.stage = STAGE_GREEN
        self.stage_elapsed = carry
        self.green_elapsed = carry
        self.green_since_decision = carry
