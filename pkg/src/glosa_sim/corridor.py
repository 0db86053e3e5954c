"""Roadway geometry and fixed-time signal timing.

A corridor is a straight multi-lane arterial with signalized intersections at
known stop-line positions. Each signal runs a fixed-time plan: green, yellow,
all-red for the subject approach, then the combined service time of the cross
phases, after which the cycle repeats. Everything here is pure arithmetic on
immutable plan data.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class Interval(enum.Enum):
    """Displayed indication for the subject approach."""

    GREEN = "green"
    YELLOW = "yellow"
    RED = "red"


@dataclass(frozen=True)
class RoadwaySpec:
    """Static corridor geometry and speed policy.

    length: corridor length in m
    lanes_per_direction: lane count in each travel direction
    speed_limit: m/s
    stop_lines: stop-line positions in m from the corridor entry, increasing
    advisory_floor_offset: m/s; advised leader speeds stay within this offset
        below the speed limit so advisories never crawl
    """

    length: float
    lanes_per_direction: int
    speed_limit: float
    stop_lines: tuple[float, ...]
    advisory_floor_offset: float = 4.4704  # 10 mph

    @property
    def total_lanes(self) -> int:
        """Lane count across both travel directions.

        The two directions are mirror images (same geometry, same fixed-time
        plans), so the simulation runs them as independent same-shaped lanes.
        """
        return 2 * self.lanes_per_direction

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("corridor length must be positive")
        if self.lanes_per_direction < 1:
            raise ValueError("lanes_per_direction must be at least 1")
        if self.speed_limit <= 0:
            raise ValueError("speed_limit must be positive")
        if not (0 < self.advisory_floor_offset <= self.speed_limit):
            raise ValueError("advisory_floor_offset must be in (0, speed_limit]")
        lines = tuple(float(p) for p in self.stop_lines)
        object.__setattr__(self, "stop_lines", lines)
        if any(p <= 0 or p > self.length for p in lines):
            raise ValueError("stop lines must lie inside the corridor")
        if any(b <= a for a, b in zip(lines, lines[1:])):
            raise ValueError("stop lines must be strictly increasing")


@dataclass(frozen=True)
class SignalTimingPlan:
    """Fixed-time plan for one signal, subject-approach point of view.

    green/yellow/all_red: interval durations in s for the subject approach.
    cross_phase_total: s of cross-street service between the subject all-red
        and the next subject green. The subject approach displays red for
        all_red + cross_phase_total each cycle.
    offset: s; shifts the subject green onset to t = offset (mod cycle).
    """

    green: float = 30.0
    yellow: float = 3.0
    all_red: float = 2.0
    cross_phase_total: float = 25.0
    offset: float = 0.0

    def __post_init__(self):
        if self.green <= 0 or self.yellow < 0 or self.all_red < 0:
            raise ValueError("green must be positive; yellow and all_red non-negative")
        if self.cross_phase_total < 0:
            raise ValueError("cross_phase_total must be non-negative")
        if self.cycle <= 0:
            raise ValueError("cycle length must be positive")

    @property
    def cycle(self) -> float:
        return self.green + self.yellow + self.all_red + self.cross_phase_total

    @property
    def non_green(self) -> float:
        """Total per-cycle time the subject approach is not green."""
        return self.yellow + self.all_red + self.cross_phase_total


@dataclass(frozen=True)
class SignalPhaseState:
    """Indication shown at one instant plus the time left in that interval."""

    interval: Interval
    remaining: float
    signal_id: int = 0

    def __post_init__(self):
        if self.remaining < 0:
            raise ValueError("remaining time cannot be negative")


def phase_at(plan: SignalTimingPlan, t: float, signal_id: int = 0) -> SignalPhaseState:
    """Indication of `plan` at absolute time `t` (periodic lookup).

    The cycle-local clock starts at the green onset: green occupies
    [0, green), yellow [green, green+yellow), and red the remainder
    (subject all-red plus cross-phase service).
    """
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    local = (t - plan.offset) % plan.cycle
    if local < plan.green:
        return SignalPhaseState(Interval.GREEN, plan.green - local, signal_id)
    if local < plan.green + plan.yellow:
        return SignalPhaseState(Interval.YELLOW, plan.green + plan.yellow - local, signal_id)
    return SignalPhaseState(Interval.RED, plan.cycle - local, signal_id)


def time_to_next_green(state: SignalPhaseState, plan: SignalTimingPlan) -> float:
    """Seconds from now until the subject approach next turns green.

    During green this measures to the start of the *following* green (the
    residue of the current green plus the full non-green stretch); during
    yellow or red it is the remaining non-green time only.
    """
    if state.interval is Interval.GREEN:
        return state.remaining + plan.non_green
    if state.interval is Interval.YELLOW:
        return state.remaining + plan.all_red + plan.cross_phase_total
    return state.remaining


def available_time(state: SignalPhaseState, plan: SignalTimingPlan, case: str) -> float:
    """Passable time window for a platoon under the given service case.

    Case "I" (pass during the current green) returns the remaining green and
    is only defined while the signal shows green. Case "II" (pass at the next
    green) returns the time until that green begins, regardless of the
    current interval.
    """
    case = str(case)
    if case == "I":
        if state.interval is not Interval.GREEN:
            raise ValueError("case I service requires the signal to be green")
        return state.remaining
    if case == "II":
        return time_to_next_green(state, plan)
    raise ValueError(f"unknown platoon case {case!r}; expected 'I' or 'II'")
