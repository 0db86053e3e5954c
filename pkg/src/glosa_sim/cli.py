"""Command-line front end.

Subcommands:
    run       execute one (config, seed, mode) simulation and write its logs
    compare   pair two finished run directories into an effectiveness report
    sweep     run the densities x seeds matrix, both modes, with summaries
    validate  check a config file and exit 0/2

Exit codes: 0 success, 1 runtime failure (including failed sweep cells),
2 bad usage or invalid config.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import (
    LATENCY_PROFILES,
    ConfigError,
    ScenarioConfig,
    load_scenario,
    load_sweep,
)
from .logs import (
    read_latency_csv,
    read_trajectory_csv,
    write_latency_csv,
    write_trajectory_csv,
)
from .metrics import moe_report
from .scenario import (
    MODE_ADVISED,
    MODE_BASELINE,
    RunResult,
    box_plot_data,
    compare,
    latency_summary,
    run_scenario,
)

TRAJECTORY_FILE = "trajectory.csv"
LATENCY_FILE = "latency.csv"
MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.json"


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(cfg: ScenarioConfig, mode: str, result: RunResult) -> dict:
    return {
        "package_version": __version__,
        "mode": mode,
        "seed": cfg.demand.seed,
        "config_hash": cfg.config_hash(),
        "arrival_hash": result.arrival_hash,
        "config": cfg.to_dict(),
        "counts": {
            "vehicles": cfg.demand.vehicle_count,
            "entered": len(result.entry_times),
            "exited": len(result.exit_times),
            "trajectory_rows": len(result.trajectory.rows),
            "deliveries": len(result.deliveries),
            "cluster_runs": result.cluster_runs,
            "skipped_clusters": result.skipped_clusters,
        },
    }


def write_run_dir(cfg: ScenarioConfig, result: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result.trajectory, out / TRAJECTORY_FILE)
    if result.mode == MODE_ADVISED:
        write_latency_csv(result.latency_records, out / LATENCY_FILE)
    _write_json(_manifest(cfg, result.mode, result), out / MANIFEST_FILE)


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "capacity", None) is not None:
        if args.capacity < 1:
            raise ConfigError("--capacity: must be at least 1")
        cfg.module_capacity = args.capacity
    profile = getattr(args, "latency_profile", None)
    if profile is not None:
        up, down, overhead = LATENCY_PROFILES[profile]
        cfg.latency = type(cfg.latency)(
            upload_mean_ms=up,
            download_mean_ms=down,
            dispersion=cfg.latency.dispersion,
            overhead_ms=overhead,
        )
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_scenario(args.config), args)
    result = run_scenario(cfg, args.mode)
    out = Path(args.out)
    write_run_dir(cfg, result, out)
    print(
        f"{cfg.name} [{args.mode}] seed={cfg.demand.seed} density={cfg.demand.density_class}: "
        f"{len(result.entry_times)} entered, {len(result.exit_times)} exited, "
        f"{len(result.deliveries)} advisories delivered -> {out}"
    )
    return 0


def _load_run_dir(path: Path) -> tuple[dict, "TrajectoryLog", list]:
    manifest_path = path / MANIFEST_FILE
    if not manifest_path.exists():
        raise FileNotFoundError(f"{path}: not a run directory (missing {MANIFEST_FILE})")
    manifest = json.loads(manifest_path.read_text())
    log = read_trajectory_csv(path / TRAJECTORY_FILE)
    latency_path = path / LATENCY_FILE
    records = read_latency_csv(latency_path) if latency_path.exists() else []
    return manifest, log, records


def _write_boxes(boxes: dict[str, dict[str, float]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measure", "min", "q1", "median", "q3", "max"])
        for measure, q in boxes.items():
            writer.writerow(
                [measure, repr(q["min"]), repr(q["q1"]), repr(q["median"]), repr(q["q3"]), repr(q["max"])]
            )


def _flatten(prefix: str, node, out: list[tuple[str, object]]) -> None:
    if isinstance(node, dict):
        for key in sorted(node):
            _flatten(f"{prefix}.{key}" if prefix else key, node[key], out)
    else:
        out.append((prefix, node))


def cmd_compare(args: argparse.Namespace) -> int:
    base_dir, adv_dir = Path(args.baseline), Path(args.advised)
    base_man, base_log, _ = _load_run_dir(base_dir)
    adv_man, adv_log, adv_latency = _load_run_dir(adv_dir)
    if base_man["mode"] != MODE_BASELINE or adv_man["mode"] != MODE_ADVISED:
        print("compare: --baseline must hold a baseline run and --advised an advised run", file=sys.stderr)
        return 2
    if base_man["arrival_hash"] != adv_man["arrival_hash"]:
        print("compare: runs are not paired (arrival schedules differ)", file=sys.stderr)
        return 2
    run_cfg = adv_man["config"]["run"]
    met_cfg = adv_man["config"]["metrics"]
    moe = moe_report(
        base_log,
        adv_log,
        met_cfg["stopped_threshold_ms"],
        met_cfg["ttc_threshold_s"],
        run_cfg["dt_s"],
        run_cfg["warmup_s"],
        final_tick=run_cfg["duration_s"] - run_cfg["dt_s"],
    )
    report = {
        "moe": moe.to_dict(),
        "latency": latency_summary(adv_latency),
        "baseline_arrival_hash": base_man["arrival_hash"],
        "advised_arrival_hash": adv_man["arrival_hash"],
        "config_hash": adv_man["config_hash"],
    }
    out = Path(args.out)
    _write_json(report, out / REPORT_FILE)
    flat: list[tuple[str, object]] = []
    _flatten("", report, flat)
    with (out / "report.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        writer.writerows(flat)
    dt, stopped = run_cfg["dt_s"], met_cfg["stopped_threshold_ms"]
    last_tick = run_cfg["duration_s"] - dt
    _write_boxes(box_plot_data(base_log, [], dt, stopped, last_tick), out / "boxes_baseline.csv")
    _write_boxes(box_plot_data(adv_log, adv_latency, dt, stopped, last_tick), out / "boxes_advised.csv")
    m = report["moe"]
    print(
        f"stopped delay {m['baseline_stopped_delay_s']:.1f} -> {m['advised_stopped_delay_s']:.1f} s "
        f"({_pct(m['stopped_delay_reduction_pct'])}); "
        f"travel time {m['baseline_travel_time_s']:.1f} -> {m['advised_travel_time_s']:.1f} s; "
        f"mean latency {report['latency']['mean_ms']:.0f} ms -> {out}"
    )
    return 0


def _pct(value) -> str:
    return "n/a" if value is None else f"{value:+.1f}%"


def _sweep_cell(work: tuple[ScenarioConfig, str, int, str]) -> dict:
    """One sweep cell: paired baseline/advised runs plus their report."""
    base_cfg, density, seed, out_root = work
    cfg = base_cfg.with_density(density).with_seed(seed)
    cell_dir = Path(out_root) / density / f"seed-{seed}"
    try:
        baseline = run_scenario(cfg, MODE_BASELINE)
        write_run_dir(cfg, baseline, cell_dir / MODE_BASELINE)
        advised = run_scenario(cfg, MODE_ADVISED)
        write_run_dir(cfg, advised, cell_dir / MODE_ADVISED)
        report = compare(baseline, advised)
        _write_json(report.to_dict(), cell_dir / REPORT_FILE)
    except Exception:
        return {"density": density, "seed": seed, "error": traceback.format_exc()}
    moe = report.moe
    return {
        "density": density,
        "seed": seed,
        "stopped_delay_reduction_pct": moe.stopped_delay_reduction_pct,
        "travel_time_reduction_pct": moe.travel_time_reduction_pct,
        "tit_reduction_pct": moe.tit_reduction_pct,
        "baseline_stopped_delay_s": moe.baseline_stopped_delay_s,
        "advised_stopped_delay_s": moe.advised_stopped_delay_s,
        "mean_latency_ms": report.latency["mean_ms"],
        "fraction_over_bound": report.latency["fraction_over_bound"],
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    sweep = load_sweep(args.config)
    base = _apply_overrides(sweep.base, args)
    out = Path(args.out)
    cells = [
        (base, density, seed, str(out))
        for density in sweep.densities
        for seed in sweep.seeds
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(cell) for cell in cells]

    ok = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    _write_json({"cells": ok, "failures": failed}, out / "summary.json")
    if ok:
        with (out / "summary.csv").open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(ok[0]))
            writer.writeheader()
            writer.writerows(ok)
    for row in ok:
        print(
            f"{row['density']:>6} seed {row['seed']}: stopped delay "
            f"{row['baseline_stopped_delay_s']:.1f} -> {row['advised_stopped_delay_s']:.1f} s "
            f"({_pct(row['stopped_delay_reduction_pct'])}), "
            f"latency {row['mean_latency_ms']:.0f} ms"
        )
    for row in failed:
        print(f"{row['density']:>6} seed {row['seed']}: FAILED\n{row['error']}", file=sys.stderr)
    return 1 if failed else 0


def cmd_validate(args: argparse.Namespace) -> int:
    import yaml

    doc = yaml.safe_load(Path(args.config).read_text()) if Path(args.config).exists() else None
    if isinstance(doc, dict) and "sweep" in doc:
        sweep = load_sweep(args.config)
        print(
            f"OK {sweep.base.name}: sweep of {len(sweep.densities)} densities x "
            f"{len(sweep.seeds)} seeds (hash {sweep.base.config_hash()[:12]})"
        )
    else:
        cfg = load_scenario(args.config)
        print(f"OK {cfg.name} (hash {cfg.config_hash()[:12]})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glosa-sim",
        description="Corridor speed-advisory simulation: paired runs, sweeps, and reports.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one simulation run")
    run.add_argument("--config", required=True, help="scenario YAML file")
    run.add_argument("--mode", choices=[MODE_BASELINE, MODE_ADVISED], default=MODE_ADVISED)
    run.add_argument("--seed", type=int, default=None, help="override the demand seed")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--capacity", type=int, default=None, help="override module capacity")
    run.add_argument(
        "--latency-profile", choices=sorted(LATENCY_PROFILES), default=None,
        help="override the cloud latency profile",
    )
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="pair two finished runs into a report")
    cmp_.add_argument("--baseline", required=True, help="baseline run directory")
    cmp_.add_argument("--advised", required=True, help="advised run directory")
    cmp_.add_argument("--out", required=True, help="report output directory")
    cmp_.set_defaults(func=cmd_compare)

    sweep = sub.add_parser("sweep", help="run the densities x seeds matrix")
    sweep.add_argument("--config", required=True, help="sweep YAML file")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sweep.add_argument("--capacity", type=int, default=None, help="override module capacity")
    sweep.add_argument(
        "--latency-profile", choices=sorted(LATENCY_PROFILES), default=None,
        help="override the cloud latency profile",
    )
    sweep.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True, help="scenario or sweep YAML file")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
