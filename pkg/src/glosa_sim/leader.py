"""Speed advisories for platoon leaders.

A case-I leader can clear the signal in the current green, so it is simply
advised the speed limit. A case-II leader is told the constant target speed
that minimizes its delay relative to free flow while still arriving no
earlier than the next green onset: the candidate range is bounded below by a
floor offset under the speed limit (no crawling advisories) and above by the
arrive-at-green-onset speed, and searched on a fixed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corridor import RoadwaySpec
from .platooning import Platoon, PlatoonCase
from .traffic import VehicleCapabilities

GRID_STEP = 0.01  # m/s advisory grid resolution

ROLE_LEADER = "leader"
ROLE_FOLLOWER = "follower"


@dataclass(frozen=True)
class SpeedAdvisory:
    """One advised speed for one CV, with provenance for auditing."""

    cv_id: int
    advised_speed: float  # m/s
    generated_at: float  # s, simulation clock at computation time
    signal_id: int
    role: str  # "leader" or "follower"
    speed_at_generation: float | None = None  # CV speed in the source message
    mpc_status: str | None = None  # follower advisories: QP solve status

    def __post_init__(self):
        if self.advised_speed < 0:
            raise ValueError("advised speed cannot be negative")
        if self.role not in (ROLE_LEADER, ROLE_FOLLOWER):
            raise ValueError(f"unknown advisory role {self.role!r}")


def _travel_time(target: float, speed: float, distance: float, caps: VehicleCapabilities) -> float:
    """Time to cover `distance` by ramping to `target` speed, then holding it.

    The ramp uses the acceleration capability when speeding up and the
    braking capability when slowing down. If the distance runs out before the
    ramp completes, the crossing happens mid-ramp and the time follows from
    the constant-acceleration kinematics alone.
    """
    if target <= 0:
        raise ValueError("target speed must be positive")
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if target == speed:
        return distance / target
    a = caps.accel if target > speed else caps.brake
    ramp_dist = (target * target - speed * speed) / (2.0 * a)
    if ramp_dist <= distance:
        ramp_time = (target - speed) / a
        return ramp_time + (distance - ramp_dist) / target
    # line is crossed before the ramp finishes
    return (-speed + math.sqrt(speed * speed + 2.0 * a * distance)) / a


def leader_delay(
    advised: float,
    speed: float,
    distance: float,
    speed_limit: float,
    caps: VehicleCapabilities,
) -> float:
    """Arrival delay of tracking `advised` instead of the speed limit.

    Both alternatives are evaluated with the same ramp-then-hold profile from
    the leader's current speed over its stop-line distance; the delay is the
    difference. Zero when `advised` equals the limit.
    """
    if advised <= 0:
        raise ValueError("advised speed must be positive")
    return _travel_time(advised, speed, distance, caps) - _travel_time(
        speed_limit, speed, distance, caps
    )


def advisory_bounds(
    distance: float, t_available: float, speed_limit: float, floor_offset: float
) -> tuple[float, float]:
    """Candidate speed range [lb, ub] for a case-II leader advisory.

    lb keeps the advisory within `floor_offset` of the speed limit. ub is the
    constant speed that arrives exactly at the next green onset, capped at
    the limit. When even lb arrives too early the range degenerates to the
    floor (the leader will coast in and wait briefly).
    """
    if distance < 0 or t_available <= 0:
        raise ValueError("distance must be >= 0 and t_available > 0")
    lb = speed_limit - floor_offset
    onset_speed = distance / t_available
    if onset_speed >= lb:
        return lb, min(speed_limit, onset_speed)
    return lb, lb


def optimize_leader(
    platoon: Platoon,
    t_available: float,
    roadway: RoadwaySpec,
    caps: VehicleCapabilities,
    now: float = 0.0,
) -> SpeedAdvisory:
    """Pick the delay-minimizing advised speed for a platoon leader.

    Case I leaders get the speed limit outright. Case II leaders get the
    grid-search argmin of `leader_delay` over `advisory_bounds`, ties broken
    toward the faster speed.
    """
    if platoon.case is PlatoonCase.UNASSIGNED:
        raise ValueError("unassigned platoons receive no advisory")
    lead = platoon.leader
    if platoon.case is PlatoonCase.CASE_I:
        speed = roadway.speed_limit
    else:
        lb, ub = advisory_bounds(
            platoon.distances[0], t_available, roadway.speed_limit, roadway.advisory_floor_offset
        )
        speed = _grid_argmin(lead.speed, platoon.distances[0], lb, ub, roadway.speed_limit, caps)
    return SpeedAdvisory(
        cv_id=lead.cv_id,
        advised_speed=speed,
        generated_at=now,
        signal_id=platoon.signal_id,
        role=ROLE_LEADER,
        speed_at_generation=lead.speed,
    )


def _grid_argmin(
    speed: float,
    distance: float,
    lb: float,
    ub: float,
    speed_limit: float,
    caps: VehicleCapabilities,
) -> float:
    if ub <= lb:
        return lb
    count = int(math.floor((ub - lb) / GRID_STEP + 1e-9)) + 1
    candidates = [lb + k * GRID_STEP for k in range(count)]
    if candidates[-1] < ub - 1e-12:
        candidates.append(ub)
    best = None
    best_delay = math.inf
    for cand in reversed(candidates):  # scan fast-to-slow so ties keep the faster speed
        delay = leader_delay(cand, speed, distance, speed_limit, caps)
        if delay < best_delay - 0.0:
            best_delay = delay
            best = cand
    return best
