"""Evaluation quantities: minimum inter-vehicle distance, crash detection,
CBR aggregation, speed traces, disturbance attenuation, and CSV output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .channel import WINDOW_US, BusyLedger


@dataclass
class RunMetrics:
    """Everything measured in one simulation run."""

    scheme: str
    scenario: str
    seed: int
    duration: float
    global_min_distance: float = float("inf")
    crash: bool = False
    crash_time: Optional[float] = None
    crash_pair: Optional[tuple[int, int]] = None
    inter_platoon_min: float = float("inf")
    cbr_series: list[float] = field(default_factory=list)
    avg_cbr: float = 0.0
    sample_times: list[float] = field(default_factory=list)
    speed_traces: dict[int, list[float]] = field(default_factory=dict)
    gap_samples: list[tuple[float, int, int, float]] = field(default_factory=list)
    beacon_rows: list[tuple[float, int, int, float, str]] = field(default_factory=list)
    special_beacons: list[tuple[float, int, int, Optional[float]]] = field(default_factory=list)
    protocol_failures: int = 0
    malformed_beacons: int = 0
    tx_count: int = 0
    delivered_count: int = 0
    lost_count: int = 0
    vehicle_info: dict[int, tuple[int, int, int]] = field(default_factory=dict)  # id -> (platoon, index, lane)


def global_min_distance(gap_samples: Sequence[tuple[float, int, int, float]]) -> float:
    """Brute-force minimum over recorded (time, rear, front, gap) samples."""
    return min((gap for _, _, _, gap in gap_samples), default=float("inf"))


def aggregate_cbr(
    ledgers: dict[int, BusyLedger], duration: float
) -> tuple[list[float], float]:
    """Per-window mean CBR across all observers, plus the run average.

    Only fully elapsed 1 s windows count; the run average is the mean over
    those windows (0.0 for runs shorter than one window).
    """
    n_windows = int(duration * 1_000_000) // WINDOW_US
    if not ledgers or n_windows == 0:
        return [], 0.0
    series = []
    for window in range(n_windows):
        total = sum(ledger.busy_in_window(window) for ledger in ledgers.values())
        series.append(total / (len(ledgers) * WINDOW_US))
    return series, sum(series) / len(series)


def string_stability_check(
    times: Sequence[float],
    traces_by_index: Sequence[Sequence[float]],
    initiator: int,
    window: tuple[float, float],
    tolerance: float = 0.02,
) -> tuple[list[float], bool]:
    """Peak speed deviations from the initiator toward the tail, and whether
    they are non-amplifying.

    For each vehicle at platoon index >= initiator, the deviation is the peak
    |speed - speed at window start| inside the window. The flag is true iff
    the sequence never grows by more than `tolerance` (relative) from one
    vehicle to the next.
    """
    t0, t1 = window
    if not times or t0 < times[0] or t1 > times[-1] or t1 <= t0:
        raise ValueError(f"window [{t0}, {t1}] outside the sampled range")
    lo = next(i for i, t in enumerate(times) if t >= t0)
    hi = max(i for i, t in enumerate(times) if t <= t1)
    deviations = []
    for trace in traces_by_index[initiator:]:
        baseline = trace[lo]
        deviations.append(max(abs(trace[i] - baseline) for i in range(lo, hi + 1)))
    flag = all(
        deviations[i + 1] <= deviations[i] * (1.0 + tolerance)
        for i in range(len(deviations) - 1)
    )
    return deviations, flag


def _fmt(value: float) -> str:
    """Plain-decimal formatting, stable across runs."""
    return f"{value:.9f}"


SUMMARY_COLUMNS = [
    "scheme",
    "scenario",
    "seed",
    "min_distance",
    "crash",
    "avg_cbr",
    "protocol_failures",
    "inter_platoon_min",
]


def summary_row(metrics: RunMetrics) -> list[str]:
    return [
        metrics.scheme,
        metrics.scenario,
        str(metrics.seed),
        _fmt(metrics.global_min_distance),
        str(metrics.crash).lower(),
        _fmt(metrics.avg_cbr),
        str(metrics.protocol_failures),
        _fmt(metrics.inter_platoon_min),
    ]


def write_summary(rows: Sequence[Sequence[str]], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(rows)


def write_outputs(metrics: RunMetrics, out_dir: str | Path) -> list[Path]:
    """Write the five per-run CSV files; returns the paths written."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc

    paths = []

    def _open(name: str):
        paths.append(out / name)
        return open(out / name, "w", newline="")

    try:
        with _open("summary.csv") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            writer.writerow(summary_row(metrics))

        with _open("speeds.csv") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "vehicle", "speed"])
            for i, t in enumerate(metrics.sample_times):
                for vid in sorted(metrics.speed_traces):
                    writer.writerow([_fmt(t), vid, _fmt(metrics.speed_traces[vid][i])])

        with _open("gaps.csv") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "rear", "front", "gap"])
            for t, rear, front, gap in metrics.gap_samples:
                writer.writerow([_fmt(t), rear, front, _fmt(gap)])

        with _open("cbr.csv") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window", "mean_cbr"])
            for window, value in enumerate(metrics.cbr_series):
                writer.writerow([window, _fmt(value)])

        with _open("beacons.csv") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time", "sender", "type", "payload", "outcome"])
            for t, sender, btype, payload, outcome in metrics.beacon_rows:
                writer.writerow([_fmt(t), sender, btype, _fmt(payload), outcome])
    except OSError as exc:
        raise OSError(f"failed writing run outputs under {out}: {exc}") from exc

    return paths
