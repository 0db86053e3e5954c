"""Scenario configuration: YAML in, validated SI dataclasses out.

Every physical value in a config file may carry a unit suffix ("35 mph",
"1.5 mi", "295 ms"); bare numbers are read as SI. Validation errors name the
offending field path. The resolved configuration serializes back to a plain
dict (`ScenarioConfig.to_dict`) that fully determines a run, which is what
run manifests embed and hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .cloud import LatencyModel
from .corridor import RoadwaySpec, SignalTimingPlan
from .traffic import (
    DEFAULT_CV_LENGTH,
    DENSITY_FLOWS,
    CarFollowingParams,
    TrafficDemand,
    VehicleCapabilities,
)
from .units import parse_quantity

LATENCY_PROFILES = {
    # name: (upload mean ms, download mean ms, platform overhead ms)
    "default": (75.0, 78.0, 295.0),
    "fast": (10.0, 10.0, 50.0),
    "slow": (150.0, 160.0, 600.0),
    "zero": (0.0, 0.0, 0.0),
}


class ConfigError(ValueError):
    """A config file failed validation; the message names the field."""


@dataclass(frozen=True)
class MetricsParams:
    stopped_threshold: float = 0.1  # m/s
    ttc_threshold: float = 2.0  # s


@dataclass(frozen=True)
class CtgParams:
    time_gap: float = 2.0  # s
    standstill_gap: float = 2.0  # m


@dataclass
class ScenarioConfig:
    """Everything one run needs; a (config, seed, mode) triple is reproducible."""

    name: str
    roadway: RoadwaySpec
    plans: list[SignalTimingPlan]
    demand: TrafficDemand
    caps: VehicleCapabilities = field(default_factory=VehicleCapabilities)
    cf: CarFollowingParams = field(default_factory=CarFollowingParams)
    ctg: CtgParams = field(default_factory=CtgParams)
    metrics: MetricsParams = field(default_factory=MetricsParams)
    cv_length: float = DEFAULT_CV_LENGTH
    module_capacity: int = 50
    latency: LatencyModel = field(default_factory=LatencyModel)
    duration: float = 900.0  # s
    warmup: float = 0.0  # s excluded from measures (entry-time based)
    dt: float = 1.0  # s
    fault_windows: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        demand = TrafficDemand(
            self.demand.density_class, self.demand.vehicle_count, seed, self.demand.flow
        )
        out = ScenarioConfig(**{**self.__dict__, "demand": demand})
        return out

    def with_density(self, density: str) -> "ScenarioConfig":
        demand = TrafficDemand(density, self.demand.vehicle_count, self.demand.seed, None)
        return ScenarioConfig(**{**self.__dict__, "demand": demand})

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "corridor": {
                "length_m": self.roadway.length,
                "lanes_per_direction": self.roadway.lanes_per_direction,
                "speed_limit_ms": self.roadway.speed_limit,
                "stop_lines_m": list(self.roadway.stop_lines),
                "advisory_floor_offset_ms": self.roadway.advisory_floor_offset,
            },
            "signals": [
                {
                    "green_s": p.green,
                    "yellow_s": p.yellow,
                    "all_red_s": p.all_red,
                    "cross_phase_total_s": p.cross_phase_total,
                    "offset_s": p.offset,
                }
                for p in self.plans
            ],
            "demand": {
                "density": self.demand.density_class,
                "flow_pc_h_ln": self.demand.flow,
                "vehicle_count": self.demand.vehicle_count,
                "seed": self.demand.seed,
            },
            "vehicle": {
                "accel_ms2": self.caps.accel,
                "brake_ms2": self.caps.brake,
                "length_m": self.cv_length,
            },
            "car_following": {
                "reaction_time_s": self.cf.reaction_time,
                "decel_ms2": self.cf.decel,
                "min_gap_m": self.cf.min_gap,
            },
            "ctg": {"time_gap_s": self.ctg.time_gap, "standstill_gap_m": self.ctg.standstill_gap},
            "metrics": {
                "stopped_threshold_ms": self.metrics.stopped_threshold,
                "ttc_threshold_s": self.metrics.ttc_threshold,
            },
            "cloud": {
                "module_capacity": self.module_capacity,
                "upload_mean_ms": self.latency.upload_mean_ms,
                "download_mean_ms": self.latency.download_mean_ms,
                "dispersion": self.latency.dispersion,
                "overhead_ms": self.latency.overhead_ms,
                "assigner_base_ms": self.latency.assigner_base_ms,
                "assigner_per_cv_ms": self.latency.assigner_per_cv_ms,
                "optimizer_base_ms": self.latency.optimizer_base_ms,
                "optimizer_per_follower_ms": self.latency.optimizer_per_follower_ms,
                "fault_windows": self.fault_windows,
            },
            "run": {"duration_s": self.duration, "warmup_s": self.warmup, "dt_s": self.dt},
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass
class SweepConfig:
    base: ScenarioConfig
    densities: list[str]
    seeds: list[int]


def _get(mapping: dict, key: str, path: str, default=None, required: bool = False):
    if key in mapping:
        return mapping[key]
    if required:
        raise ConfigError(f"{path}.{key}: required field is missing")
    return default


def _quantity(mapping: dict, key: str, dimension: str, path: str, default=None) -> float:
    raw = mapping.get(key, None)
    if raw is None:
        if default is None:
            raise ConfigError(f"{path}.{key}: required field is missing")
        return default
    try:
        return parse_quantity(raw, dimension, f"{path}.{key}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _expect_mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def scenario_from_dict(doc: dict, name_hint: str = "scenario") -> ScenarioConfig:
    doc = _expect_mapping(doc, "config")
    known = {
        "name", "corridor", "signals", "demand", "vehicle", "car_following",
        "ctg", "metrics", "cloud", "run",
    }
    for key in doc:
        if key not in known:
            raise ConfigError(f"config: unknown section {key!r}")
    name = doc.get("name", name_hint)

    cor = _expect_mapping(doc.get("corridor"), "corridor")
    length = _quantity(cor, "length", "length", "corridor", 2414.016)
    lanes = int(_get(cor, "lanes_per_direction", "corridor", 2))
    limit = _quantity(cor, "speed_limit", "speed", "corridor", 15.6464)
    floor = _quantity(cor, "advisory_floor_offset", "speed", "corridor", 4.4704)
    lines_raw = _get(cor, "stop_lines", "corridor", [600.0, 1200.0, 1800.0])
    if not isinstance(lines_raw, (list, tuple)) or not lines_raw:
        raise ConfigError("corridor.stop_lines: expected a non-empty list")
    lines = tuple(
        parse_quantity(v, "length", f"corridor.stop_lines[{i}]") for i, v in enumerate(lines_raw)
    )
    try:
        roadway = RoadwaySpec(length, lanes, limit, lines, floor)
    except ValueError as exc:
        raise ConfigError(f"corridor: {exc}") from None

    sig = doc.get("signals", {})
    if isinstance(sig, dict):
        sig = _expect_mapping(sig, "signals")
        green = _quantity(sig, "green", "time", "signals", 30.0)
        yellow = _quantity(sig, "yellow", "time", "signals", 3.0)
        all_red = _quantity(sig, "all_red", "time", "signals", 2.0)
        cross = _quantity(sig, "cross_phase_total", "time", "signals", 25.0)
        offsets_raw = _get(sig, "offsets", "signals", [0.0] * len(lines))
        if len(offsets_raw) != len(lines):
            raise ConfigError("signals.offsets: need one offset per stop line")
        try:
            plans = [
                SignalTimingPlan(
                    green, yellow, all_red, cross,
                    parse_quantity(off, "time", f"signals.offsets[{i}]"),
                )
                for i, off in enumerate(offsets_raw)
            ]
        except ValueError as exc:
            raise ConfigError(f"signals: {exc}") from None
    elif isinstance(sig, list):
        if len(sig) != len(lines):
            raise ConfigError("signals: need one plan per stop line")
        plans = []
        for i, one in enumerate(sig):
            one = _expect_mapping(one, f"signals[{i}]")
            try:
                plans.append(
                    SignalTimingPlan(
                        _quantity(one, "green", "time", f"signals[{i}]", 30.0),
                        _quantity(one, "yellow", "time", f"signals[{i}]", 3.0),
                        _quantity(one, "all_red", "time", f"signals[{i}]", 2.0),
                        _quantity(one, "cross_phase_total", "time", f"signals[{i}]", 25.0),
                        _quantity(one, "offset", "time", f"signals[{i}]", 0.0),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"signals[{i}]: {exc}") from None
    else:
        raise ConfigError("signals: expected a mapping or a list of per-signal mappings")

    dem = _expect_mapping(doc.get("demand"), "demand")
    density = _get(dem, "density", "demand", "medium")
    if density not in DENSITY_FLOWS:
        raise ConfigError(f"demand.density: unknown class {density!r}; expected one of {sorted(DENSITY_FLOWS)}")
    flow = dem.get("flow")
    flow_si = parse_quantity(flow, "flow", "demand.flow") if flow is not None else None
    try:
        demand = TrafficDemand(
            density,
            int(_get(dem, "vehicle_count", "demand", 50)),
            int(_get(dem, "seed", "demand", 0)),
            flow_si,
        )
    except ValueError as exc:
        raise ConfigError(f"demand: {exc}") from None

    veh = _expect_mapping(doc.get("vehicle"), "vehicle")
    try:
        caps = VehicleCapabilities(
            _quantity(veh, "accel", "accel", "vehicle", 2.5),
            _quantity(veh, "brake", "accel", "vehicle", -4.5),
        )
    except ValueError as exc:
        raise ConfigError(f"vehicle: {exc}") from None
    cv_length = _quantity(veh, "length", "length", "vehicle", DEFAULT_CV_LENGTH)

    cfm = _expect_mapping(doc.get("car_following"), "car_following")
    try:
        cf = CarFollowingParams(
            _quantity(cfm, "reaction_time", "time", "car_following", 1.0),
            _quantity(cfm, "decel", "accel", "car_following", 4.5),
            _quantity(cfm, "min_gap", "length", "car_following", 2.0),
        )
    except ValueError as exc:
        raise ConfigError(f"car_following: {exc}") from None

    ctgm = _expect_mapping(doc.get("ctg"), "ctg")
    ctg = CtgParams(
        _quantity(ctgm, "time_gap", "time", "ctg", 2.0),
        _quantity(ctgm, "standstill_gap", "length", "ctg", 2.0),
    )

    met = _expect_mapping(doc.get("metrics"), "metrics")
    metrics = MetricsParams(
        _quantity(met, "stopped_threshold", "speed", "metrics", 0.1),
        _quantity(met, "ttc_threshold", "time", "metrics", 2.0),
    )

    cloud = _expect_mapping(doc.get("cloud"), "cloud")
    profile_name = _get(cloud, "latency_profile", "cloud", "default")
    if profile_name not in LATENCY_PROFILES:
        raise ConfigError(
            f"cloud.latency_profile: unknown profile {profile_name!r}; expected one of {sorted(LATENCY_PROFILES)}"
        )
    up_default, down_default, overhead_default = LATENCY_PROFILES[profile_name]
    try:
        latency = LatencyModel(
            upload_mean_ms=_quantity(cloud, "upload_mean", "time", "cloud", up_default / 1000.0) * 1000.0,
            download_mean_ms=_quantity(cloud, "download_mean", "time", "cloud", down_default / 1000.0) * 1000.0,
            dispersion=float(_get(cloud, "dispersion", "cloud", 0.25)),
            overhead_ms=_quantity(cloud, "overhead", "time", "cloud", overhead_default / 1000.0) * 1000.0,
        )
    except ValueError as exc:
        raise ConfigError(f"cloud: {exc}") from None
    capacity = int(_get(cloud, "module_capacity", "cloud", 50))
    if capacity < 1:
        raise ConfigError("cloud.module_capacity: must be at least 1")
    faults_raw = _expect_mapping(cloud.get("fault_windows"), "cloud.fault_windows")
    fault_windows = {}
    for store, windows in faults_raw.items():
        if not isinstance(windows, list):
            raise ConfigError(f"cloud.fault_windows.{store}: expected a list of [start, end] pairs")
        parsed = []
        for j, win in enumerate(windows):
            if not isinstance(win, (list, tuple)) or len(win) != 2:
                raise ConfigError(f"cloud.fault_windows.{store}[{j}]: expected [start, end]")
            a = parse_quantity(win[0], "time", f"cloud.fault_windows.{store}[{j}][0]")
            b = parse_quantity(win[1], "time", f"cloud.fault_windows.{store}[{j}][1]")
            if b <= a:
                raise ConfigError(f"cloud.fault_windows.{store}[{j}]: end must exceed start")
            parsed.append((a, b))
        fault_windows[store] = parsed

    run = _expect_mapping(doc.get("run"), "run")
    duration = _quantity(run, "duration", "time", "run", 900.0)
    warmup = _quantity(run, "warmup", "time", "run", 0.0)
    dt = _quantity(run, "dt", "time", "run", 1.0)
    if duration <= 0:
        raise ConfigError("run.duration: must be positive")
    if warmup < 0 or warmup >= duration:
        raise ConfigError("run.warmup: must lie in [0, duration)")
    if dt <= 0:
        raise ConfigError("run.dt: must be positive")

    return ScenarioConfig(
        name=name,
        roadway=roadway,
        plans=plans,
        demand=demand,
        caps=caps,
        cf=cf,
        ctg=ctg,
        metrics=metrics,
        cv_length=cv_length,
        module_capacity=capacity,
        latency=latency,
        duration=duration,
        warmup=warmup,
        dt=dt,
        fault_windows=fault_windows,
    )


def load_scenario(path: Path | str) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    return scenario_from_dict(doc or {}, name_hint=path.stem)


def load_sweep(path: Path | str) -> SweepConfig:
    """A sweep file is a scenario plus a `sweep` section of densities and seeds."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    doc = _expect_mapping(doc, "config")
    sweep = _expect_mapping(doc.pop("sweep", None), "sweep")
    base = scenario_from_dict(doc, name_hint=path.stem)
    densities = sweep.get("densities", ["low", "medium", "high"])
    for d in densities:
        if d not in DENSITY_FLOWS:
            raise ConfigError(f"sweep.densities: unknown class {d!r}")
    seeds = [int(s) for s in sweep.get("seeds", [1, 2, 3])]
    if not seeds:
        raise ConfigError("sweep.seeds: need at least one seed")
    return SweepConfig(base=base, densities=list(densities), seeds=seeds)
