"""End-to-end scenario execution: world + cloud pipeline + logs.

The advised loop each second: vehicles enter, publish their state messages
(which commit after upload latency), every signal's cluster fires and writes
advisories (visible after processing latency), vehicles poll for anything
newly visible (delivered after download latency), and the world steps with
every advisory that has been delivered by now. Baseline runs never touch the
pipeline. Identical (config, seed, mode) triples replay bit-identically.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .cloud import CloudEmulator, Delivery, LatencyRecord, tick_stream
from .config import ScenarioConfig
from .leader import SpeedAdvisory
from .logs import TrajectoryLog, TrajectoryRow
from .metrics import MoeReport, moe_report, quantiles
from .qp import STATUS_OPTIMAL
from .traffic import Arrival, World, spawn_traffic

MODE_BASELINE = "baseline"
MODE_ADVISED = "advised"

# An advisory only stays in force while the pipeline keeps refreshing it:
# clusters re-advise every second and delivery is bounded under a second, so
# anything older than this has lapsed (the CV fell out of its platoon or the
# pipeline stopped covering it) and the CV reverts to the baseline law.
ADVISORY_TTL_S = 1.5


def _actionable(advisory: SpeedAdvisory) -> bool:
    """Whether a delivered advisory may steer the vehicle.

    Leader advisories always qualify. A follower advisory qualifies only when
    the gap optimization certified its constraints (status optimal): softened
    or degenerate results mean the requested gap floor was unreachable from
    the current state, and a production solver stack simply has no certified
    solution to publish there — the vehicle keeps its baseline driving law
    until the system can advise it again.
    """
    return advisory.mpc_status is None or advisory.mpc_status == STATUS_OPTIMAL


@dataclass
class RunResult:
    mode: str
    config: ScenarioConfig
    trajectory: TrajectoryLog
    latency_records: list[LatencyRecord]
    deliveries: list[Delivery]
    applied: list[tuple[float, SpeedAdvisory]]  # (tick, advisory in effect)
    arrival_hash: str
    cluster_runs: int
    skipped_clusters: int
    processing_ms: list[float]  # per executed cluster run
    entry_times: dict[int, float]
    exit_times: dict[int, float]


def arrival_schedule_hash(arrivals: list[Arrival]) -> str:
    payload = ";".join(f"{a.time!r},{a.lane},{a.cv_id}" for a in arrivals)
    return hashlib.sha256(payload.encode()).hexdigest()


def run_scenario(cfg: ScenarioConfig, mode: str) -> RunResult:
    """Execute one run. `mode` is "baseline" or "advised"."""
    if mode not in (MODE_BASELINE, MODE_ADVISED):
        raise ValueError(f"unknown mode {mode!r}; expected '{MODE_BASELINE}' or '{MODE_ADVISED}'")
    seeds = np.random.SeedSequence(cfg.demand.seed).spawn(2)
    arrivals = spawn_traffic(
        cfg.demand, cfg.roadway.total_lanes, np.random.default_rng(seeds[0])
    )
    schedule_hash = arrival_schedule_hash(arrivals)
    world = World(
        cfg.roadway,
        cfg.plans,
        cfg.caps,
        cfg.cf,
        arrivals,
        cfg.cv_length,
        cfg.dt,
    )
    cloud = None
    if mode == MODE_ADVISED:
        latency = replace(cfg.latency, seed=int(seeds[1].generate_state(1)[0]))
        cloud = CloudEmulator(
            cfg.roadway,
            cfg.plans,
            cfg.caps,
            latency,
            capacity=cfg.module_capacity,
            time_gap=cfg.ctg.time_gap,
            standstill_gap=cfg.ctg.standstill_gap,
            dt=cfg.dt,
            fault_windows=cfg.fault_windows,
        )

    rows: list[TrajectoryRow] = []
    latency_records: list[LatencyRecord] = []
    deliveries: list[Delivery] = []
    applied_log: list[tuple[float, SpeedAdvisory]] = []
    # delivered but not yet in force (delivery instants land mid-step)
    inbox: dict[int, list[tuple[SpeedAdvisory, float]]] = {}
    # the advisory each CV is currently tracking, with its delivery time
    effective: dict[int, tuple[SpeedAdvisory, float]] = {}
    cluster_runs = 0
    processing_ms: list[float] = []

    steps = int(round(cfg.duration / cfg.dt))
    for k in range(steps):
        t = k * cfg.dt
        world.insert_arrivals()
        advised_speeds: dict[int, float] = {}
        if cloud is not None:
            cloud.upload_bsms(world.bsm_snapshot(), t)
            for trigger in tick_stream(cfg.plans, t):
                result = cloud.run_cluster(trigger)
                cluster_runs += 1
                if not result.skipped:
                    processing_ms.append(result.processing_ms)
            for cv_id in world.active_ids():
                delivery = cloud.download_advisory(cv_id, t)
                if delivery is not None:
                    deliveries.append(delivery)
                    latency_records.append(delivery.record)
                    inbox.setdefault(cv_id, []).append((delivery.advisory, delivery.delivered_at))
            vehicles = {cv.cv_id: cv for cv in world.vehicles()}
            for cv_id in list(inbox) + [i for i in effective if i not in inbox]:
                cv = vehicles.get(cv_id)
                if cv is None:  # exited
                    inbox.pop(cv_id, None)
                    effective.pop(cv_id, None)
                    continue
                pending = inbox.get(cv_id, ())
                ready = [(a, d) for a, d in pending if d <= t and _actionable(a)]
                if ready:
                    newest, newest_delivery = max(ready, key=lambda ad: ad[0].generated_at)
                    cur = effective.get(cv_id)
                    if cur is None or newest.generated_at >= cur[0].generated_at:
                        effective[cv_id] = (newest, newest_delivery)
                if pending:
                    inbox[cv_id] = [(a, d) for a, d in pending if d > t]
                cur = effective.get(cv_id)
                if cur is not None:
                    advisory, delivered_at = cur
                    # expires once its signal is behind the CV; lapses when the
                    # pipeline stops refreshing it (e.g. the CV became unassigned)
                    if (
                        cv.x > cfg.roadway.stop_lines[advisory.signal_id]
                        or t - delivered_at > ADVISORY_TTL_S
                    ):
                        del effective[cv_id]
            for cv_id, (advisory, _) in effective.items():
                advised_speeds[cv_id] = advisory.advised_speed
                applied_log.append((t, advisory))

        for lane in world.lanes:
            for cv in lane:
                rows.append(
                    TrajectoryRow(
                        t=t,
                        cv_id=cv.cv_id,
                        lane=cv.lane,
                        x=cv.x,
                        speed=cv.speed,
                        gap=cv.gap,
                        advised_speed=advised_speeds.get(cv.cv_id),
                    )
                )
        if cloud is not None:
            world.step_advised(advised_speeds)
        else:
            world.step_baseline()

    return RunResult(
        mode=mode,
        config=cfg,
        trajectory=TrajectoryLog(rows),
        latency_records=latency_records,
        deliveries=deliveries,
        applied=applied_log,
        arrival_hash=schedule_hash,
        cluster_runs=cluster_runs,
        skipped_clusters=len(cloud.skipped_clusters) if cloud is not None else 0,
        processing_ms=processing_ms,
        entry_times=dict(world.entry_times),
        exit_times=dict(world.exit_times),
    )


@dataclass
class ComparisonReport:
    """A paired baseline/advised comparison plus the advised latency summary."""

    moe: MoeReport
    latency: dict
    baseline_arrival_hash: str
    advised_arrival_hash: str

    def to_dict(self) -> dict:
        return {
            "moe": self.moe.to_dict(),
            "latency": self.latency,
            "baseline_arrival_hash": self.baseline_arrival_hash,
            "advised_arrival_hash": self.advised_arrival_hash,
        }


def latency_summary(records: list[LatencyRecord], bound_ms: float = 1000.0) -> dict:
    """Mean/median/quantile summary of delivered end-to-end latency."""
    if not records:
        raise ValueError("advised run delivered no advisories; latency summary undefined")
    totals = sorted(r.end_to_end_ms for r in records)
    processing = [r.processing_ms for r in records]
    n = len(totals)

    def pct(f: float) -> float:
        pos = f * (n - 1)
        lo, hi = int(math.floor(pos)), int(math.ceil(pos))
        if lo == hi:
            return totals[lo]
        return totals[lo] + (totals[hi] - totals[lo]) * (pos - lo)

    return {
        "deliveries": n,
        "mean_ms": sum(totals) / n,
        "median_ms": pct(0.5),
        "p05_ms": pct(0.05),
        "p95_ms": pct(0.95),
        "max_ms": totals[-1],
        "mean_processing_ms": sum(processing) / len(processing),
        "bound_ms": bound_ms,
        "fraction_over_bound": sum(1 for v in totals if v > bound_ms) / n,
    }


def compare(baseline: RunResult, advised: RunResult) -> ComparisonReport:
    """Build the paired measures-of-effectiveness and latency report."""
    if baseline.mode != MODE_BASELINE or advised.mode != MODE_ADVISED:
        raise ValueError("compare expects (baseline, advised) in that order")
    if baseline.arrival_hash != advised.arrival_hash:
        raise ValueError("runs are not paired: arrival schedules differ (seed or demand mismatch)")
    cfg = baseline.config
    moe = moe_report(
        baseline.trajectory,
        advised.trajectory,
        cfg.metrics.stopped_threshold,
        cfg.metrics.ttc_threshold,
        cfg.dt,
        cfg.warmup,
        final_tick=cfg.duration - cfg.dt,
    )
    return ComparisonReport(
        moe=moe,
        latency=latency_summary(advised.latency_records),
        baseline_arrival_hash=baseline.arrival_hash,
        advised_arrival_hash=advised.arrival_hash,
    )


def box_plot_data(
    trajectory: TrajectoryLog,
    latency_records: list[LatencyRecord],
    dt: float,
    stopped_threshold: float,
    final_tick: float | None = None,
) -> dict[str, dict[str, float]]:
    """Quantile summaries (box-plot feedstock) for one run's key measures."""
    final = final_tick if final_tick is not None else trajectory.final_tick()
    stopped = []
    travel = []
    for cv_id, cv_rows in sorted(trajectory.by_cv().items()):
        stopped.append(dt * sum(1 for r in cv_rows if r.speed <= stopped_threshold))
        if cv_rows[-1].t < final:
            travel.append(cv_rows[-1].t + dt - cv_rows[0].t)
    out = {
        "stopped_delay_s": quantiles(stopped),
        "travel_time_s": quantiles(travel),
    }
    if latency_records:
        out["end_to_end_ms"] = quantiles([r.end_to_end_ms for r in latency_records])
        out["processing_ms"] = quantiles([r.processing_ms for r in latency_records])
    return out
