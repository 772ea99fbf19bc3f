"""Per-step metrics, trace I/O and replicate aggregation."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_COLUMNS = (
    "step",
    "observed_coverage",
    "consolidation_coverage",
    "map_accuracy",
    "bytes_sent_total",
    "realized_cost",
    "stored_total",
    "neighbor_counts",
    "loads",
    "bytes_per_agent",
    "node_ids",
    "new_hashes",
)


@dataclass
class MetricsFrame:
    step: int
    observed_coverage: float
    consolidation_coverage: float
    map_accuracy: float | None
    bytes_sent_total: int
    realized_cost: float
    neighbor_counts: list[int] = field(default_factory=list)
    loads: list[int] = field(default_factory=list)
    bytes_per_agent: list[int] = field(default_factory=list)
    node_ids: list[int] = field(default_factory=list)
    new_hashes: list[int] = field(default_factory=list)

    @property
    def stored_total(self) -> int:
        return sum(self.loads)

    def row(self) -> list[str]:
        acc = "" if self.map_accuracy is None else f"{self.map_accuracy:.6f}"
        return [
            str(self.step),
            f"{self.observed_coverage:.6f}",
            f"{self.consolidation_coverage:.6f}",
            acc,
            str(self.bytes_sent_total),
            f"{self.realized_cost:.9f}",
            str(self.stored_total),
            _join(self.neighbor_counts),
            _join(self.loads),
            _join(self.bytes_per_agent),
            _join(self.node_ids),
            _join(self.new_hashes),
        ]

    @classmethod
    def from_row(cls, row: dict) -> "MetricsFrame":
        acc = row["map_accuracy"]
        return cls(
            step=int(row["step"]),
            observed_coverage=float(row["observed_coverage"]),
            consolidation_coverage=float(row["consolidation_coverage"]),
            map_accuracy=float(acc) if acc else None,
            bytes_sent_total=int(row["bytes_sent_total"]),
            realized_cost=float(row["realized_cost"]),
            neighbor_counts=_split(row["neighbor_counts"]),
            loads=_split(row["loads"]),
            bytes_per_agent=_split(row["bytes_per_agent"]),
            node_ids=_split(row["node_ids"]),
            new_hashes=_split(row["new_hashes"]),
        )


def _join(values: Iterable[int]) -> str:
    return " ".join(str(v) for v in values)


def _split(text: str) -> list[int]:
    return [int(v) for v in text.split()]


def write_trace(frames: Iterable[MetricsFrame], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for f in frames:
            w.writerow(f.row())


def read_trace(path: str | Path) -> list[MetricsFrame]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: trace lacks columns {sorted(missing)}")
        return [MetricsFrame.from_row(r) for r in reader]


# -- metric definitions ----------------------------------------------------------


def observation_coverage(observed: Iterable[int], n_objects: int) -> float:
    """Share of objects annotated at least once."""
    if n_objects <= 0:
        return 0.0
    return len(set(observed)) / n_objects


def consolidation_coverage(consolidated: Iterable[int], n_objects: int) -> float:
    """Share of objects with a consolidated annotation currently stored."""
    return observation_coverage(consolidated, n_objects)


def map_accuracy(pairs: Iterable[tuple[int, int]]) -> float | None:
    """Share of consolidated (label, truth) pairs that agree; None if empty."""
    total = correct = 0
    for label, truth in pairs:
        total += 1
        correct += label == truth
    return correct / total if total else None


def bandwidth_per_agent(frames: Sequence[MetricsFrame], dt: float, window: int | None = None) -> dict:
    """Bytes sent per second per agent.

    Returns the mean over agents and time, the spread (std) across agents
    of their time-averaged rate, and, with ``window`` steps, a per-window
    series of the swarm mean.
    """
    if not frames:
        return {"mean": 0.0, "spread": 0.0, "series": []}
    per_agent = np.array([f.bytes_per_agent for f in frames], dtype=float)
    if per_agent.size == 0:
        return {"mean": 0.0, "spread": 0.0, "series": []}
    rate = per_agent.mean(axis=0) / dt
    out = {"mean": float(rate.mean()), "spread": float(rate.std()), "series": []}
    if window:
        for start in range(0, len(frames), window):
            chunk = per_agent[start : start + window]
            out["series"].append((frames[start].step, float(chunk.mean() / dt)))
    return out


def nodeid_hash_histograms(frames: Sequence[MetricsFrame]) -> tuple[dict[int, int], dict[int, int]]:
    """Counts of every NodeID sample and of every created tuple hash."""
    nid: dict[int, int] = {}
    rho: dict[int, int] = {}
    for f in frames:
        for v in f.node_ids:
            nid[v] = nid.get(v, 0) + 1
        for v in f.new_hashes:
            rho[v] = rho.get(v, 0) + 1
    return dict(sorted(nid.items())), dict(sorted(rho.items()))


def histogram_median(hist: dict[int, int]) -> float:
    values = np.repeat(np.array(list(hist), dtype=float), np.array(list(hist.values()), dtype=int))
    return float(np.median(values)) if len(values) else math.nan


def median_iqr(values: Sequence[float]) -> tuple[float, float, float]:
    """(median, 25th percentile, 75th percentile), ignoring NaNs."""
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    arr = arr[~np.isnan(arr)]
    if len(arr) == 0:
        return math.nan, math.nan, math.nan
    q25, med, q75 = np.percentile(arr, [25, 50, 75])
    return float(med), float(q25), float(q75)


def aggregate_series(runs: Sequence[Sequence[float | None]]) -> list[tuple[float, float, float]]:
    """Median and IQR across replicate runs at each index (runs truncated to the shortest)."""
    if not runs:
        return []
    length = min(len(r) for r in runs)
    return [median_iqr([r[k] for r in runs]) for k in range(length)]
