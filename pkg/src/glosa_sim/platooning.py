"""Grouping of approaching CVs into platoons by green-window reachability.

Per approach lane, CVs are scanned nearest-first. While the signal is green,
a first platoon collects every consecutive CV whose fastest possible arrival
fits in the remaining green (case I). The next consecutive stretch that can
arrive by the start of the following green forms one case-II platoon. The
rest stay unassigned this tick and receive no advisory. Platoons are
contiguous by construction: a vehicle cannot overtake within a lane.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corridor import Interval, SignalPhaseState, SignalTimingPlan, available_time
from .traffic import BsmRecord


class PlatoonCase(str, enum.Enum):
    CASE_I = "I"
    CASE_II = "II"
    UNASSIGNED = "unassigned"


@dataclass
class Platoon:
    """A contiguous run of same-lane CVs sharing a service case at one signal.

    members are ordered nearest-to-stop-line first; distances[i] is members[i]'s
    stop-line distance in m at identification time.
    """

    signal_id: int
    lane: int
    case: PlatoonCase
    members: list[BsmRecord]
    distances: list[float]

    @property
    def leader(self) -> BsmRecord:
        return self.members[0]

    @property
    def followers(self) -> list[BsmRecord]:
        return self.members[1:]

    def __len__(self) -> int:
        return len(self.members)


def min_time_to_intersection(speed: float, distance: float, speed_limit: float, accel: float) -> float:
    """Fastest possible arrival time at the stop line.

    Full-throttle profile: accelerate at `accel` until the speed limit, then
    hold it. When the distance is shorter than the distance needed to reach
    the limit, the whole approach is spent accelerating.
    """
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if speed < 0 or speed > speed_limit + 1e-9:
        raise ValueError("speed must lie in [0, speed_limit]")
    if accel <= 0 or speed_limit <= 0:
        raise ValueError("accel and speed_limit must be positive")
    accel_dist = (speed_limit * speed_limit - speed * speed) / (2.0 * accel)
    if distance >= accel_dist:
        return (speed_limit - speed) / accel + (distance - accel_dist) / speed_limit
    return (-speed + math.sqrt(speed * speed + 2.0 * accel * distance)) / accel


def identify_platoons(
    lane_bsms: Mapping[int, Sequence[BsmRecord]],
    phase: SignalPhaseState,
    plan: SignalTimingPlan,
    speed_limit: float,
    accel: float,
    stop_line: float,
) -> list[Platoon]:
    """Partition each lane's approaching CVs into case-I / case-II / unassigned.

    `lane_bsms` maps lane index to that lane's CVs upstream of `stop_line`,
    sorted nearest-first. Every CV lands in exactly one returned platoon; the
    unassigned remainder (if any) is returned as a platoon with case
    UNASSIGNED so callers can account for it.
    """
    green = phase.interval is Interval.GREEN
    avail_current = available_time(phase, plan, "I") if green else None
    avail_next = available_time(phase, plan, "II")
    platoons: list[Platoon] = []
    for lane in sorted(lane_bsms):
        records = list(lane_bsms[lane])
        dists = []
        for rec in records:
            d = stop_line - rec.x
            if d < 0:
                raise ValueError(f"cv {rec.cv_id} is past the stop line (x={rec.x}, line={stop_line})")
            dists.append(d)
        if any(b < a for a, b in zip(dists, dists[1:])):
            raise ValueError("lane records must be sorted nearest-first")

        groups: dict[PlatoonCase, tuple[list[BsmRecord], list[float]]] = {}
        building = PlatoonCase.CASE_I if green else PlatoonCase.CASE_II
        for rec, d in zip(records, dists):
            t_min = min_time_to_intersection(rec.speed, d, speed_limit, accel)
            while True:
                if building is PlatoonCase.CASE_I:
                    if t_min <= avail_current:
                        break
                    building = PlatoonCase.CASE_II
                elif building is PlatoonCase.CASE_II:
                    if t_min <= avail_next:
                        break
                    building = PlatoonCase.UNASSIGNED
                else:
                    break
            members, ds = groups.setdefault(building, ([], []))
            members.append(rec)
            ds.append(d)
        for case in (PlatoonCase.CASE_I, PlatoonCase.CASE_II, PlatoonCase.UNASSIGNED):
            if case in groups:
                members, ds = groups[case]
                platoons.append(Platoon(phase.signal_id, lane, case, members, ds))
    return platoons
