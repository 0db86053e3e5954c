"""Emulated serverless advisory pipeline: stores, triggers, clusters, latency.

The real deployment streams per-second vehicle messages into a key-value
store, fires one compute cluster per signal per second, fans platoon
optimizations out to parallel workers capped at fifty CVs per module, and
writes advisories back for vehicles to poll. This module reproduces that
data flow on the simulation clock: writes commit after a sampled upload
delay, cluster output commits after a modeled processing time, and polls see
exactly what has committed by the read instant. Latency components are
accounted per delivered advisory and must sum exactly to the end-to-end
figure.

Processing time is modeled, not measured: a fixed platform overhead plus
small per-CV assignment and per-platoon optimization costs, with parallel
modules contributing the maximum rather than the sum. A measured wall clock
would break run-to-run reproducibility of the latency log.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corridor import RoadwaySpec, SignalPhaseState, SignalTimingPlan, available_time, phase_at
from .follower_mpc import build_qp, optimize_followers
from .leader import SpeedAdvisory, optimize_leader
from .platooning import Platoon, PlatoonCase, identify_platoons
from .traffic import BsmRecord, VehicleCapabilities

DEFAULT_MODULE_CAPACITY = 50  # CVs per advisory module

STORE_TRAJECTORY = "trajectory"
STORE_ADVISORY = "advisory"
STORE_DISTANCE = "distance_history"


class KeyValueStore:
    """Last-writer-wins store with commit-time visibility.

    A write initiated at t becomes visible once its commit instant has
    passed; reads at time r return the payload of the latest commit <= r.
    Outage windows (fault injection) drop writes and blind reads.
    """

    def __init__(self, name: str, outages: Sequence[tuple[float, float]] = ()):
        self.name = name
        self.outages = [(float(a), float(b)) for a, b in outages]
        self._data: dict = {}
        self._seq = 0
        self.dropped_writes = 0

    def available(self, t: float) -> bool:
        return not any(a <= t < b for a, b in self.outages)

    def put(self, key, payload, commit_time: float) -> bool:
        if not self.available(commit_time):
            self.dropped_writes += 1
            return False
        history = self._data.setdefault(key, [])
        self._seq += 1
        entry = (commit_time, self._seq, payload)
        if history and commit_time < history[-1][0]:
            # out-of-order commit (an unlucky long upload): keep sorted
            history.insert(bisect_right([h[0] for h in history], commit_time), entry)
        else:
            history.append(entry)
        return True

    def get(self, key, at: float):
        history = self._data.get(key)
        if not history:
            return None
        best = None
        for commit, _, payload in history:
            if commit <= at:
                best = payload
            else:
                break
        return best

    def snapshot(self, at: float) -> dict:
        """Latest visible payload per key at time `at` (keys with none omitted)."""
        out = {}
        for key in self._data:
            payload = self.get(key, at)
            if payload is not None:
                out[key] = payload
        return out


@dataclass(frozen=True)
class LatencyRecord:
    """Per-delivery latency accounting; end_to_end is exactly the sum."""

    cv_id: int
    upload_ms: float
    processing_ms: float
    download_ms: float
    end_to_end_ms: float
    staleness_ms: float = 0.0
    t: float = 0.0  # simulation time of the delivering poll

    def __post_init__(self):
        expect = self.upload_ms + self.processing_ms + self.download_ms
        if self.end_to_end_ms != expect:
            raise ValueError("end_to_end_ms must equal upload + processing + download exactly")


def end_to_end(record: LatencyRecord) -> float:
    """Total advisory-loop latency in ms: upload + processing + download."""
    return record.upload_ms + record.processing_ms + record.download_ms


@dataclass
class LatencyModel:
    """Latency sampling and the processing-time cost model.

    Upload and download delays are log-normal with the configured means (ms)
    and a common log-space dispersion; a zero mean short-circuits to exactly
    zero. Processing is deterministic: platform overhead plus linear
    assignment / optimization costs (ms).
    """

    upload_mean_ms: float = 75.0
    download_mean_ms: float = 78.0
    dispersion: float = 0.25
    overhead_ms: float = 295.0
    assigner_base_ms: float = 0.5
    assigner_per_cv_ms: float = 0.03
    optimizer_base_ms: float = 0.8
    optimizer_per_follower_ms: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if min(self.upload_mean_ms, self.download_mean_ms, self.overhead_ms) < 0:
            raise ValueError("latency means and overhead must be non-negative")
        if self.dispersion < 0:
            raise ValueError("dispersion must be non-negative")
        self._rng = np.random.default_rng(self.seed)

    def _sample(self, mean_ms: float) -> float:
        if mean_ms <= 0:
            return 0.0
        if self.dispersion == 0:
            return mean_ms
        mu = math.log(mean_ms) - 0.5 * self.dispersion * self.dispersion
        return float(self._rng.lognormal(mu, self.dispersion))

    def sample_upload(self) -> float:
        return self._sample(self.upload_mean_ms)

    def sample_download(self) -> float:
        return self._sample(self.download_mean_ms)

    def assigner_ms(self, cv_count: int) -> float:
        return self.assigner_base_ms + self.assigner_per_cv_ms * cv_count

    def optimizer_ms(self, follower_count: int) -> float:
        return self.optimizer_base_ms + self.optimizer_per_follower_ms * follower_count


@dataclass
class AdvisoryModule:
    """One bounded-size assignment unit: at most `capacity` CVs, distance order."""

    module_id: int
    cv_ids: list[int]
    platoons: list[Platoon] = field(default_factory=list)
    processing_ms: float = 0.0


def partition_modules(cv_ids: Sequence[int], capacity: int = DEFAULT_MODULE_CAPACITY) -> list[AdvisoryModule]:
    """Split distance-ordered CV ids into ceil(n/capacity) modules, order kept."""
    if capacity < 1:
        raise ValueError("module capacity must be at least 1")
    ids = list(cv_ids)
    modules = []
    for k in range(0, len(ids), capacity):
        modules.append(AdvisoryModule(module_id=len(modules), cv_ids=ids[k : k + capacity]))
    return modules


@dataclass(frozen=True)
class TriggerEvent:
    """Per-second stream trigger for one signal's cluster."""

    signal_id: int
    t: float
    phase: SignalPhaseState


def tick_stream(plans: Sequence[SignalTimingPlan], t: float) -> list[TriggerEvent]:
    """The triggers fired at simulation time t: one per signal."""
    return [TriggerEvent(i, t, phase_at(plan, t, i)) for i, plan in enumerate(plans)]


@dataclass(frozen=True)
class Delivery:
    """An advisory handed to a CV, with when it arrived and its latency split."""

    advisory: SpeedAdvisory
    delivered_at: float
    record: LatencyRecord


@dataclass
class ClusterResult:
    signal_id: int
    t: float
    advisories: list[SpeedAdvisory]
    processing_ms: float
    modules: list[AdvisoryModule]
    skipped: bool = False


@dataclass(frozen=True)
class _StoredBsm:
    bsm: BsmRecord
    sent_at: float
    upload_ms: float


@dataclass(frozen=True)
class _StoredAdvisory:
    advisory: SpeedAdvisory
    upload_ms: float
    processing_ms: float


class CloudEmulator:
    """The full advisory loop against one corridor's stores and signals."""

    def __init__(
        self,
        roadway: RoadwaySpec,
        plans: Sequence[SignalTimingPlan],
        caps: VehicleCapabilities,
        latency: LatencyModel,
        capacity: int = DEFAULT_MODULE_CAPACITY,
        time_gap: float = 2.0,
        standstill_gap: float = 2.0,
        dt: float = 1.0,
        fault_windows: Mapping[str, Sequence[tuple[float, float]]] | None = None,
    ):
        if len(plans) != len(roadway.stop_lines):
            raise ValueError("need exactly one signal plan per stop line")
        faults = dict(fault_windows or {})
        unknown = set(faults) - {STORE_TRAJECTORY, STORE_ADVISORY, STORE_DISTANCE}
        if unknown:
            raise ValueError(f"fault windows reference unknown stores: {sorted(unknown)}")
        self.roadway = roadway
        self.plans = list(plans)
        self.caps = caps
        self.latency = latency
        self.capacity = capacity
        self.time_gap = time_gap
        self.standstill_gap = standstill_gap
        self.dt = dt
        self.trajectory_store = KeyValueStore(STORE_TRAJECTORY, faults.get(STORE_TRAJECTORY, ()))
        self.advisory_store = KeyValueStore(STORE_ADVISORY, faults.get(STORE_ADVISORY, ()))
        self.distance_stores = {
            i: KeyValueStore(f"{STORE_DISTANCE}[{i}]", faults.get(STORE_DISTANCE, ()))
            for i in range(len(self.plans))
        }
        self._last_delivered_gen: dict[int, float] = {}
        self.skipped_clusters: list[tuple[float, int, str]] = []
        self.crossing_events: list[tuple[float, int, int]] = []  # (t, signal, cv)

    # -- vehicle side ------------------------------------------------------

    def upload_bsms(self, bsms: Iterable[BsmRecord], t: float) -> list[tuple[int, float]]:
        """Send one message per CV; each commits after its sampled upload delay.

        Returns (cv_id, upload_ms) pairs in the deterministic sampling order.
        """
        receipts = []
        for bsm in sorted(bsms, key=lambda b: b.cv_id):
            delay = self.latency.sample_upload()
            self.trajectory_store.put(bsm.cv_id, _StoredBsm(bsm, t, delay), t + delay / 1000.0)
            receipts.append((bsm.cv_id, delay))
        return receipts

    def download_advisory(self, cv_id: int, t: float) -> Delivery | None:
        """Poll the advisory store; deliver anything newer than last delivered.

        The delivery lands after a sampled download delay; the attached
        latency record carries the upstream upload and processing components
        of exactly the message chain that produced this advisory.
        """
        if not self.advisory_store.available(t):
            return None
        stored: _StoredAdvisory | None = self.advisory_store.get(cv_id, t)
        if stored is None:
            return None
        gen = stored.advisory.generated_at
        if gen <= self._last_delivered_gen.get(cv_id, -math.inf):
            return None
        delay = self.latency.sample_download()
        delivered_at = t + delay / 1000.0
        self._last_delivered_gen[cv_id] = gen
        record = LatencyRecord(
            cv_id=cv_id,
            upload_ms=stored.upload_ms,
            processing_ms=stored.processing_ms,
            download_ms=delay,
            end_to_end_ms=stored.upload_ms + stored.processing_ms + delay,
            staleness_ms=(delivered_at - gen) * 1000.0,
            t=t,
        )
        return Delivery(stored.advisory, delivered_at, record)

    # -- cluster side ------------------------------------------------------

    def _approach_signal(self, x: float) -> int | None:
        """Index of the signal whose stop line is next ahead of position x."""
        for i, line in enumerate(self.roadway.stop_lines):
            if line >= x:
                return i
        return None

    def run_cluster(self, trigger: TriggerEvent) -> ClusterResult:
        """One assigner pass for one signal at one trigger.

        Reads the visible vehicle messages, keeps those approaching this
        signal, maintains the signal's distance history, partitions into
        modules, identifies platoons per lane, and computes leader plus
        follower advisories. Advisory writes commit after the modeled
        processing time. A store outage skips the run (logged).
        """
        t = trigger.t
        sig = trigger.signal_id
        distance_store = self.distance_stores[sig]
        stores = (self.trajectory_store, self.advisory_store, distance_store)
        for store in stores:
            if not store.available(t):
                self.skipped_clusters.append((t, sig, store.name))
                return ClusterResult(sig, t, [], 0.0, [], skipped=True)

        visible = self.trajectory_store.snapshot(t)
        line = self.roadway.stop_lines[sig]
        approaching: list[_StoredBsm] = []
        for cv_id in sorted(visible):
            stored: _StoredBsm = visible[cv_id]
            target = self._approach_signal(stored.bsm.x)
            previous = distance_store.get(cv_id, t)
            if target == sig:
                approaching.append(stored)
                distance_store.put(cv_id, line - stored.bsm.x, t)
            elif previous is not None and previous > 0 and stored.bsm.x > line:
                # the stored distance ran out: this CV crossed us since last tick
                distance_store.put(cv_id, line - stored.bsm.x, t)
                self.crossing_events.append((t, sig, cv_id))

        approaching.sort(key=lambda s: (line - s.bsm.x, s.bsm.cv_id))
        modules = partition_modules([s.bsm.cv_id for s in approaching], self.capacity)
        by_id = {s.bsm.cv_id: s for s in approaching}

        advisories: list[SpeedAdvisory] = []
        stored_out: list[_StoredAdvisory] = []
        module_times: list[float] = []
        for module in modules:
            lane_bsms: dict[int, list[BsmRecord]] = {}
            for cv_id in module.cv_ids:
                lane_bsms.setdefault(by_id[cv_id].bsm.lane, []).append(by_id[cv_id].bsm)
            platoons = identify_platoons(
                lane_bsms, trigger.phase, self.plans[sig], self.roadway.speed_limit,
                self.caps.accel, line,
            )
            module.platoons = platoons
            optimizer_times = [0.0]
            for platoon in platoons:
                if platoon.case is PlatoonCase.UNASSIGNED:
                    continue
                t_avail = available_time(trigger.phase, self.plans[sig], platoon.case.value)
                lead_adv = optimize_leader(platoon, t_avail, self.roadway, self.caps, now=t)
                advisories.append(lead_adv)
                stored_out.append(
                    _StoredAdvisory(lead_adv, by_id[lead_adv.cv_id].upload_ms, 0.0)
                )
                if platoon.followers:
                    system = build_qp(
                        platoon, lead_adv, self.dt, self.caps, self.roadway.speed_limit,
                        self.time_gap, self.standstill_gap,
                    )
                    for adv in optimize_followers(system):
                        advisories.append(adv)
                        stored_out.append(
                            _StoredAdvisory(adv, by_id[adv.cv_id].upload_ms, 0.0)
                        )
                    optimizer_times.append(self.latency.optimizer_ms(len(platoon.followers)))
            module.processing_ms = self.latency.assigner_ms(len(module.cv_ids)) + max(optimizer_times)
            module_times.append(module.processing_ms)

        processing = self.latency.overhead_ms + (max(module_times) if module_times else 0.0)
        commit = t + processing / 1000.0
        final_out = []
        for stored in stored_out:
            stamped = _StoredAdvisory(stored.advisory, stored.upload_ms, processing)
            self.advisory_store.put(stamped.advisory.cv_id, stamped, commit)
            final_out.append(stamped)
        return ClusterResult(sig, t, advisories, processing, modules)
