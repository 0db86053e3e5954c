"""Signalized-corridor microsimulation with a cloud-hosted speed advisory pipeline.

The package simulates connected vehicles (CVs) on a multi-lane arterial with
fixed-time signals, identifies platoons that can clear an intersection in the
current or the next green interval, computes green-window speed advisories for
platoon leaders and gap-regulating advisories for followers, and emulates the
serverless cloud pipeline (message stores, per-signal compute clusters,
upload/processing/download latency) that delivers those advisories back to the
vehicles.
"""

__version__ = "0.1.0"

from .corridor import (
    Interval,
    RoadwaySpec,
    SignalPhaseState,
    SignalTimingPlan,
    available_time,
    phase_at,
)
from .traffic import (
    BsmRecord,
    CarFollowingParams,
    CvState,
    TrafficDemand,
    VehicleCapabilities,
    World,
    safe_speed,
    spawn_traffic,
)
from .platooning import Platoon, PlatoonCase, identify_platoons, min_time_to_intersection
from .leader import SpeedAdvisory, advisory_bounds, leader_delay, optimize_leader
from .follower_mpc import GapSystem, build_qp, optimize_followers, target_gaps
from .qp import QpProblem, QpSolution, brute_force_qp, solve_qp
from .cloud import CloudEmulator, KeyValueStore, LatencyModel, LatencyRecord, partition_modules
from .metrics import MoeReport, moe_report, stopped_delay, tit, travel_time, ttc
from .config import ScenarioConfig, SweepConfig, load_scenario, load_sweep
from .scenario import ComparisonReport, RunResult, compare, latency_summary, run_scenario

__all__ = [
    "Interval",
    "RoadwaySpec",
    "SignalPhaseState",
    "SignalTimingPlan",
    "available_time",
    "phase_at",
    "BsmRecord",
    "CarFollowingParams",
    "CvState",
    "TrafficDemand",
    "VehicleCapabilities",
    "World",
    "safe_speed",
    "spawn_traffic",
    "Platoon",
    "PlatoonCase",
    "identify_platoons",
    "min_time_to_intersection",
    "SpeedAdvisory",
    "advisory_bounds",
    "leader_delay",
    "optimize_leader",
    "GapSystem",
    "build_qp",
    "optimize_followers",
    "target_gaps",
    "QpProblem",
    "QpSolution",
    "brute_force_qp",
    "solve_qp",
    "CloudEmulator",
    "KeyValueStore",
    "LatencyModel",
    "LatencyRecord",
    "partition_modules",
    "MoeReport",
    "moe_report",
    "stopped_delay",
    "tit",
    "travel_time",
    "ttc",
    "ScenarioConfig",
    "SweepConfig",
    "load_scenario",
    "load_sweep",
    "ComparisonReport",
    "RunResult",
    "compare",
    "latency_summary",
    "run_scenario",
    "__version__",
]
