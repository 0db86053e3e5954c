"""Measures of effectiveness and surrogate safety over trajectory logs.

Mobility: per-CV stopped delay (seconds spent at or below a near-zero speed)
and in-corridor travel time. Safety: time-to-collision against the immediate
predecessor, aggregated into time-integrated TTC (TIT) over the ticks where
TTC falls below a threshold. Reports compare a paired baseline and advised
run of the same demand.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .logs import TrajectoryLog, TrajectoryRow

STOPPED_SPEED_THRESHOLD = 0.1  # m/s
TTC_THRESHOLD = 2.0  # s


def stopped_delay(rows: list[TrajectoryRow], threshold: float = STOPPED_SPEED_THRESHOLD, dt: float = 1.0) -> float:
    """Seconds one CV spent (quasi) stopped while inside the corridor."""
    return dt * sum(1 for r in rows if r.speed <= threshold)


def travel_time(rows: list[TrajectoryRow], final_tick: float, dt: float = 1.0) -> float | None:
    """Entry-to-exit time for one CV, or None if it never left the corridor.

    A CV's last logged tick is its final second inside; it exits during the
    following step. A CV still present at the log's final tick has not
    exited and is excluded from travel-time averages (reported as coverage).
    """
    if not rows:
        return None
    first = rows[0].t
    last = rows[-1].t
    if last >= final_tick:
        return None
    return last + dt - first


def ttc(gap: float, speed_follower: float, speed_leader: float) -> float:
    """Time to collision; infinite unless the follower is closing."""
    if gap < 0:
        raise ValueError("gap must be non-negative")
    if speed_follower > speed_leader:
        return gap / (speed_follower - speed_leader)
    return math.inf


def tit(log: TrajectoryLog, ttc_threshold: float = TTC_THRESHOLD, dt: float = 1.0) -> float:
    """Time-integrated TTC exposure summed over all CVs and ticks.

    Each tick where a follower's TTC is between 0 and the threshold
    contributes (threshold - TTC) * dt; larger means more sustained
    near-collision exposure.
    """
    total = 0.0
    for rows in log.by_tick().values():
        lanes: dict[int, list[TrajectoryRow]] = {}
        for row in rows:
            lanes.setdefault(row.lane, []).append(row)
        for lane_rows in lanes.values():
            lane_rows.sort(key=lambda r: -r.x)
            for ahead, behind in zip(lane_rows, lane_rows[1:]):
                if not math.isfinite(behind.gap):
                    continue
                value = ttc(behind.gap, behind.speed, ahead.speed)
                if 0.0 <= value <= ttc_threshold:
                    total += (ttc_threshold - value) * dt
    return total


@dataclass(frozen=True)
class MoeReport:
    """Paired-run comparison; reductions are (baseline - advised)/baseline."""

    baseline_stopped_delay_s: float
    advised_stopped_delay_s: float
    stopped_delay_reduction_pct: float | None
    baseline_travel_time_s: float
    advised_travel_time_s: float
    travel_time_reduction_pct: float | None
    baseline_tit_s: float
    advised_tit_s: float
    tit_reduction_pct: float | None
    cv_count: int
    baseline_travel_coverage: int  # CVs that exited and count toward travel time
    advised_travel_coverage: int

    def to_dict(self) -> dict:
        return asdict(self)


def _reduction(base: float, adv: float) -> float | None:
    if base == 0:
        return None  # undefined against a zero baseline
    return (base - adv) / base * 100.0


def moe_report(
    baseline: TrajectoryLog,
    advised: TrajectoryLog,
    stopped_threshold: float = STOPPED_SPEED_THRESHOLD,
    ttc_threshold: float = TTC_THRESHOLD,
    dt: float = 1.0,
    warmup: float = 0.0,
    final_tick: float | None = None,
) -> MoeReport:
    """Compare paired runs CV-for-CV.

    Both logs must cover the same CV population (same demand and seed). CVs
    entering before `warmup` are excluded from every measure. Travel-time
    means cover only CVs that exited in both runs; the coverage counts are
    reported alongside. `final_tick` is the last simulated tick of the paired
    runs; when omitted it falls back to each log's last occupied tick, which
    misreads the final CV to leave as still inside.
    """
    base_cvs = baseline.by_cv()
    adv_cvs = advised.by_cv()
    if set(base_cvs) != set(adv_cvs):
        raise ValueError(
            "baseline and advised logs cover different CV populations; "
            "compare runs of the same demand and seed"
        )
    ids = [cv for cv in sorted(base_cvs) if base_cvs[cv][0].t >= warmup and adv_cvs[cv][0].t >= warmup]
    if not ids:
        raise ValueError("no CVs remain after the warm-up exclusion")

    base_final = final_tick if final_tick is not None else baseline.final_tick()
    adv_final = final_tick if final_tick is not None else advised.final_tick()
    base_stop = [stopped_delay(base_cvs[cv], stopped_threshold, dt) for cv in ids]
    adv_stop = [stopped_delay(adv_cvs[cv], stopped_threshold, dt) for cv in ids]
    base_tt = {cv: travel_time(base_cvs[cv], base_final, dt) for cv in ids}
    adv_tt = {cv: travel_time(adv_cvs[cv], adv_final, dt) for cv in ids}
    exited = [cv for cv in ids if base_tt[cv] is not None and adv_tt[cv] is not None]

    base_mean_tt = sum(base_tt[cv] for cv in exited) / len(exited) if exited else math.nan
    adv_mean_tt = sum(adv_tt[cv] for cv in exited) / len(exited) if exited else math.nan
    base_tit_total = tit(_subset(baseline, ids), ttc_threshold, dt)
    adv_tit_total = tit(_subset(advised, ids), ttc_threshold, dt)
    base_stop_mean = sum(base_stop) / len(ids)
    adv_stop_mean = sum(adv_stop) / len(ids)
    return MoeReport(
        baseline_stopped_delay_s=base_stop_mean,
        advised_stopped_delay_s=adv_stop_mean,
        stopped_delay_reduction_pct=_reduction(base_stop_mean, adv_stop_mean),
        baseline_travel_time_s=base_mean_tt,
        advised_travel_time_s=adv_mean_tt,
        travel_time_reduction_pct=_reduction(base_mean_tt, adv_mean_tt) if exited else None,
        baseline_tit_s=base_tit_total,
        advised_tit_s=adv_tit_total,
        tit_reduction_pct=_reduction(base_tit_total, adv_tit_total),
        cv_count=len(ids),
        baseline_travel_coverage=sum(1 for cv in ids if base_tt[cv] is not None),
        advised_travel_coverage=sum(1 for cv in ids if adv_tt[cv] is not None),
    )


def _subset(log: TrajectoryLog, ids: list[int]) -> TrajectoryLog:
    wanted = set(ids)
    return TrajectoryLog([r for r in log.rows if r.cv_id in wanted])


def quantiles(values: list[float]) -> dict[str, float]:
    """Five-number summary used for box-plot data files."""
    if not values:
        return {"min": math.nan, "q1": math.nan, "median": math.nan, "q3": math.nan, "max": math.nan}
    data = sorted(values)

    def pick(fraction: float) -> float:
        # linear interpolation between closest ranks
        pos = fraction * (len(data) - 1)
        lo = int(math.floor(pos))
        hi = int(math.ceil(pos))
        if lo == hi:
            return data[lo]
        return data[lo] + (data[hi] - data[lo]) * (pos - lo)

    return {
        "min": data[0],
        "q1": pick(0.25),
        "median": pick(0.5),
        "q3": pick(0.75),
        "max": data[-1],
    }
