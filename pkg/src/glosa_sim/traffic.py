"""Deterministic per-lane car-following simulation of connected vehicles.

Vehicles follow a no-randomization Krauss-style update: each second a vehicle
takes the most permissive speed that respects its acceleration envelope, the
speed limit, a safe-following bound against its predecessor, and a stop-line
bound when its next signal shows yellow or red. Positions integrate the
average of the old and new speed, which keeps the safe-speed stopping
guarantee exact in discrete time. There are no lane changes; each lane is an
independent chain coupled only through the shared signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corridor import Interval, RoadwaySpec, SignalTimingPlan, phase_at

DENSITY_FLOWS = {"low": 633.0, "medium": 1267.0, "high": 1900.0}  # pc/h/ln

DEFAULT_CV_LENGTH = 5.0  # m


class CollisionError(RuntimeError):
    """A vehicle overlapped its predecessor; indicates a model bug."""


@dataclass(frozen=True)
class VehicleCapabilities:
    """Acceleration envelope shared by every CV in a scenario."""

    accel: float = 2.5  # m/s^2, > 0
    brake: float = -4.5  # m/s^2, < 0

    def __post_init__(self):
        if self.accel <= 0:
            raise ValueError("accel must be positive")
        if self.brake >= 0:
            raise ValueError("brake must be negative")


@dataclass(frozen=True)
class CarFollowingParams:
    """Parameters of the safe-following law.

    reaction_time: s, assumed >= the simulation step
    decel: m/s^2 (> 0), deceleration both parties are trusted to achieve
    min_gap: m, bumper-to-bumper clearance held out of the usable gap so
        queued vehicles stop short of each other instead of touching
    """

    reaction_time: float = 1.0
    decel: float = 4.5
    min_gap: float = 2.0

    def __post_init__(self):
        if self.reaction_time <= 0 or self.decel <= 0 or self.min_gap < 0:
            raise ValueError("reaction_time and decel must be positive, min_gap >= 0")


@dataclass(frozen=True)
class TrafficDemand:
    """Arrival demand for one scenario.

    density_class: low / medium / high, mapped to per-lane hourly flows of
        633 / 1267 / 1900 passenger cars
    vehicle_count: total CVs generated across all lanes
    seed: arrival-draw seed; identical seeds give identical schedules
    """

    density_class: str
    vehicle_count: int = 50
    seed: int = 0
    flow: float | None = None  # pc/h/ln; defaults from density_class

    def __post_init__(self):
        if self.density_class not in DENSITY_FLOWS:
            raise ValueError(
                f"unknown density_class {self.density_class!r}; expected one of {sorted(DENSITY_FLOWS)}"
            )
        if self.vehicle_count < 1:
            raise ValueError("vehicle_count must be at least 1")
        if self.flow is None:
            object.__setattr__(self, "flow", DENSITY_FLOWS[self.density_class])
        elif self.flow <= 0:
            raise ValueError("flow must be positive")

    @property
    def mean_headway(self) -> float:
        """Mean per-lane inter-arrival time in s."""
        return 3600.0 / self.flow


@dataclass
class CvState:
    """One connected vehicle. x is the front-bumper position in m."""

    cv_id: int
    lane: int
    x: float
    speed: float
    gap: float  # m to the predecessor's rear bumper; inf when leading the lane
    length: float = DEFAULT_CV_LENGTH


@dataclass(frozen=True)
class BsmRecord:
    """Basic safety message: the per-second state a CV reports to the cloud."""

    cv_id: int
    lane: int
    x: float
    speed: float
    gap: float


@dataclass(frozen=True)
class Arrival:
    time: float
    lane: int
    cv_id: int


def spawn_traffic(demand: TrafficDemand, lanes: int, rng: np.random.Generator) -> list[Arrival]:
    """Draw a deterministic arrival schedule for `demand` over `lanes` lanes.

    Vehicles are split evenly across lanes; per-lane inter-arrival times are
    drawn uniformly from [0.9, 1.1] x (3600/flow) seconds, so the scheduled
    per-lane flow matches the demand class. The narrow jitter mirrors how a
    flow definition meters departures (near-equidistant); a heavier-tailed
    draw would inject zero-headway bursts that pile up at the entry and
    distort the demand actually served. IDs are assigned in schedule order.
    """
    if lanes < 1:
        raise ValueError("lane count must be at least 1")
    per_lane = [demand.vehicle_count // lanes] * lanes
    for i in range(demand.vehicle_count % lanes):
        per_lane[i] += 1
    raw: list[tuple[float, int]] = []
    for lane in range(lanes):
        n = per_lane[lane]
        if n == 0:
            continue
        headways = demand.mean_headway * rng.uniform(0.9, 1.1, size=n)
        t = 0.0
        for h in headways:
            t += float(h)
            raw.append((t, lane))
    raw.sort(key=lambda item: (item[0], item[1]))
    return [Arrival(time, lane, cv_id) for cv_id, (time, lane) in enumerate(raw)]


def safe_speed(speed: float, speed_pred: float, gap: float, reaction_time: float, decel: float) -> float:
    """Largest speed from which a follower can still stop behind its predecessor.

    Assumes the follower holds the returned speed for one reaction time and
    both parties can brake at `decel`; derived from equating stopping
    distances across the available gap. Clamped at zero.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    if reaction_time <= 0 or decel <= 0:
        raise ValueError("reaction_time and decel must be positive")
    bt = decel * reaction_time
    v = -bt + math.sqrt(bt * bt + speed_pred * speed_pred + 2.0 * decel * gap)
    return max(0.0, v)


class World:
    """Mutable corridor state stepped one second at a time.

    Lanes hold vehicles ordered front (largest x) to back. Arrivals enter at
    x = 0 when there is room; a vehicle leaves once its front bumper passes
    the corridor end. `step_baseline` drives every CV by the safe-following
    law alone; `step_advised` lets listed CVs track an advised speed first,
    with the same safety bounds applied on top.
    """

    def __init__(
        self,
        roadway: RoadwaySpec,
        plans: Sequence[SignalTimingPlan],
        caps: VehicleCapabilities = VehicleCapabilities(),
        cf: CarFollowingParams = CarFollowingParams(),
        arrivals: Iterable[Arrival] = (),
        cv_length: float = DEFAULT_CV_LENGTH,
        dt: float = 1.0,
    ):
        if len(plans) != len(roadway.stop_lines):
            raise ValueError("need exactly one signal plan per stop line")
        if dt <= 0:
            raise ValueError("dt must be positive")
        if cf.reaction_time < dt:
            raise ValueError("reaction_time must be >= dt for the safety law to hold")
        self.roadway = roadway
        self.plans = list(plans)
        self.caps = caps
        self.cf = cf
        self.cv_length = cv_length
        self.dt = dt
        self.t = 0.0
        self.lanes: list[list[CvState]] = [[] for _ in range(roadway.total_lanes)]
        self._pending: list[Arrival] = sorted(arrivals, key=lambda a: (a.time, a.lane, a.cv_id))
        self.entry_times: dict[int, float] = {}
        self.exit_times: dict[int, float] = {}

    # -- population -----------------------------------------------------

    def vehicles(self) -> list[CvState]:
        return [cv for lane in self.lanes for cv in lane]

    def active_ids(self) -> list[int]:
        return sorted(cv.cv_id for cv in self.vehicles())

    def all_arrived(self) -> bool:
        return not self._pending

    def is_empty(self) -> bool:
        return all(not lane for lane in self.lanes)

    def insert_arrivals(self) -> list[int]:
        """Admit every due arrival with room at the entry; returns admitted ids.

        A blocked arrival (queue spillback over the entry) waits and blocks
        the rest of its lane's schedule, preserving lane FIFO order.
        """
        admitted = []
        blocked_lanes: set[int] = set()
        i = 0
        still_pending: list[Arrival] = []
        while i < len(self._pending) and self._pending[i].time <= self.t:
            arr = self._pending[i]
            i += 1
            if arr.lane in blocked_lanes:
                still_pending.append(arr)
                continue
            lane = self.lanes[arr.lane]
            pred = lane[-1] if lane else None
            if pred is not None:
                gap = pred.x - pred.length - 0.0
                if gap < self.cf.min_gap:
                    blocked_lanes.add(arr.lane)
                    still_pending.append(arr)
                    continue
                speed = min(
                    self.roadway.speed_limit,
                    safe_speed(0.0, pred.speed, max(0.0, gap - self.cf.min_gap),
                               self.cf.reaction_time, self.cf.decel),
                )
            else:
                gap = math.inf
                speed = self.roadway.speed_limit
            cv = CvState(arr.cv_id, arr.lane, 0.0, speed, gap, self.cv_length)
            lane.append(cv)
            self.entry_times[arr.cv_id] = self.t
            admitted.append(arr.cv_id)
        # keep blocked arrivals at the head of the pending queue, in order
        self._pending = still_pending + self._pending[i:]
        return admitted

    # -- sensing ---------------------------------------------------------

    def bsm_snapshot(self) -> list[BsmRecord]:
        """One basic safety message per active CV, ordered by id."""
        records = [
            BsmRecord(cv.cv_id, cv.lane, cv.x, cv.speed, cv.gap)
            for lane in self.lanes
            for cv in lane
        ]
        records.sort(key=lambda r: r.cv_id)
        return records

    # -- dynamics ---------------------------------------------------------

    def _stop_line_cap(self, cv: CvState, phases) -> float | None:
        """Speed bound from the nearest signal ahead, when it demands stopping.

        Red always demands stopping. Yellow demands stopping only when the
        vehicle can still stop at the trusted deceleration; otherwise it is
        already committed and proceeds through.
        """
        for i, line in enumerate(self.roadway.stop_lines):
            if line >= cv.x:
                state = phases[i]
                if state.interval is Interval.GREEN:
                    return None
                dist = line - cv.x
                if state.interval is Interval.YELLOW:
                    if cv.speed * cv.speed / (2.0 * self.cf.decel) > dist:
                        return None  # cannot stop comfortably: proceed through
                return safe_speed(cv.speed, 0.0, dist, self.cf.reaction_time, self.cf.decel)
        return None

    def _next_speed(self, cv: CvState, pred: CvState | None, desired: float, phases) -> float:
        v = min(desired, self.roadway.speed_limit)
        if pred is not None:
            usable = max(0.0, cv.gap - self.cf.min_gap)
            v = min(v, safe_speed(cv.speed, pred.speed, usable, self.cf.reaction_time, self.cf.decel))
        cap = self._stop_line_cap(cv, phases)
        if cap is not None:
            v = min(v, cap)
        return max(0.0, v)

    def _step(self, advised: Mapping[int, float]):
        dt = self.dt
        phases = [phase_at(plan, self.t, i) for i, plan in enumerate(self.plans)]
        new_speeds: dict[int, float] = {}
        for lane in self.lanes:
            for idx, cv in enumerate(lane):
                pred = lane[idx - 1] if idx > 0 else None
                if cv.cv_id in advised:
                    target = advised[cv.cv_id]
                    lo = cv.speed + self.caps.brake * dt
                    hi = cv.speed + self.caps.accel * dt
                    desired = min(max(target, lo), hi)
                else:
                    desired = cv.speed + self.caps.accel * dt
                new_speeds[cv.cv_id] = self._next_speed(cv, pred, desired, phases)
        self.t += dt
        for lane_idx, lane in enumerate(self.lanes):
            survivors = []
            for cv in lane:
                v = new_speeds[cv.cv_id]
                # speed-then-position update: advancing exactly v*dt is what
                # makes the safe-speed braking bound collision- and
                # stop-line-proof (v*dt + v^2/2b never exceeds the gap)
                cv.speed = v
                cv.x += v * dt
                if cv.x >= self.roadway.length:
                    self.exit_times[cv.cv_id] = self.t
                else:
                    survivors.append(cv)
            self.lanes[lane_idx] = survivors
        self._refresh_gaps()

    def _refresh_gaps(self):
        for lane in self.lanes:
            for idx, cv in enumerate(lane):
                if idx == 0:
                    cv.gap = math.inf
                else:
                    pred = lane[idx - 1]
                    cv.gap = pred.x - pred.length - cv.x
                    if cv.gap < -1e-9:
                        raise CollisionError(
                            f"cv {cv.cv_id} overlaps cv {pred.cv_id} at t={self.t:.1f}s "
                            f"(gap {cv.gap:.3f} m)"
                        )

    def step_baseline(self):
        """Advance one step with every CV on the unadvised driving law."""
        self._step({})

    def step_advised(self, advised_speeds: Mapping[int, float]):
        """Advance one step with the listed CVs tracking advised speeds.

        Tracking is rate-limited by the acceleration envelope, then clamped
        by the same safe-following and stop-line bounds as the baseline, so
        an advisory can never cause a collision or run a red light. CVs not
        listed follow the baseline law.
        """
        self._step(advised_speeds)
