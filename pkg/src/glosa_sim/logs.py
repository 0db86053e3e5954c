"""Run logs and their CSV round-trip.

Floats are written with repr (shortest round-trip form) so re-parsing a file
reproduces the in-memory values bit for bit; infinities appear as "inf" and
an absent advised speed as an empty cell.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .cloud import LatencyRecord

TRAJECTORY_COLUMNS = ["t", "cv_id", "lane", "x", "speed", "gap", "advised_speed"]
LATENCY_COLUMNS = [
    "t",
    "cv_id",
    "upload_ms",
    "processing_ms",
    "download_ms",
    "end_to_end_ms",
    "staleness_ms",
]


@dataclass(frozen=True)
class TrajectoryRow:
    t: float
    cv_id: int
    lane: int
    x: float
    speed: float
    gap: float
    advised_speed: float | None = None


@dataclass
class TrajectoryLog:
    """Per-tick, per-CV state rows in time order."""

    rows: list[TrajectoryRow]

    def cv_ids(self) -> set[int]:
        return {r.cv_id for r in self.rows}

    def by_cv(self) -> dict[int, list[TrajectoryRow]]:
        out: dict[int, list[TrajectoryRow]] = {}
        for row in self.rows:
            out.setdefault(row.cv_id, []).append(row)
        return out

    def by_tick(self) -> dict[float, list[TrajectoryRow]]:
        out: dict[float, list[TrajectoryRow]] = {}
        for row in self.rows:
            out.setdefault(row.t, []).append(row)
        return out

    def final_tick(self) -> float:
        return max((r.t for r in self.rows), default=0.0)


def _fmt(value: float) -> str:
    if value == math.inf:
        return "inf"
    return repr(float(value))


def write_trajectory_csv(log: TrajectoryLog, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for r in log.rows:
            writer.writerow(
                [
                    _fmt(r.t),
                    r.cv_id,
                    r.lane,
                    _fmt(r.x),
                    _fmt(r.speed),
                    _fmt(r.gap),
                    "" if r.advised_speed is None else _fmt(r.advised_speed),
                ]
            )


def read_trajectory_csv(path: Path | str) -> TrajectoryLog:
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRAJECTORY_COLUMNS:
            raise ValueError(f"unexpected trajectory header {header!r}")
        for rec in reader:
            rows.append(
                TrajectoryRow(
                    t=float(rec[0]),
                    cv_id=int(rec[1]),
                    lane=int(rec[2]),
                    x=float(rec[3]),
                    speed=float(rec[4]),
                    gap=float(rec[5]),
                    advised_speed=None if rec[6] == "" else float(rec[6]),
                )
            )
    return TrajectoryLog(rows)


def write_latency_csv(records: Iterable[LatencyRecord], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LATENCY_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    _fmt(r.t),
                    r.cv_id,
                    _fmt(r.upload_ms),
                    _fmt(r.processing_ms),
                    _fmt(r.download_ms),
                    _fmt(r.end_to_end_ms),
                    _fmt(r.staleness_ms),
                ]
            )


def read_latency_csv(path: Path | str) -> list[LatencyRecord]:
    records = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != LATENCY_COLUMNS:
            raise ValueError(f"unexpected latency header {header!r}")
        for rec in reader:
            records.append(
                LatencyRecord(
                    cv_id=int(rec[1]),
                    upload_ms=float(rec[2]),
                    processing_ms=float(rec[3]),
                    download_ms=float(rec[4]),
                    end_to_end_ms=float(rec[5]),
                    staleness_ms=float(rec[6]),
                    t=float(rec[0]),
                )
            )
    return records
