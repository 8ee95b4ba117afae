"""Per-update training metrics and their CSV serialization.

One row per update phase.  Floats are written with ``repr`` so a parsed
file reproduces the exact values and a rewritten file reproduces the exact
bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

COLUMNS = (
    "step",
    "episodes",
    "mean_episode_reward",
    "mean_episode_length",
    "value_loss",
    "baseline_loss",
    "policy_loss",
    "entropy",
    "mean_active_agents",
)


@dataclass(frozen=True)
class MetricsRow:
    step: int
    episodes: int
    mean_episode_reward: float
    mean_episode_length: float
    value_loss: float
    baseline_loss: float
    policy_loss: float
    entropy: float
    mean_active_agents: float


@dataclass
class MetricsSeries:
    """Ordered update metrics; steps strictly increase and values are finite."""

    rows: list[MetricsRow]

    def __post_init__(self) -> None:
        previous = None
        for row in self.rows:
            if previous is not None and row.step <= previous:
                raise ValueError(
                    f"metrics steps must strictly increase ({previous} -> {row.step})"
                )
            previous = row.step
            for f in fields(row):
                value = getattr(row, f.name)
                if not np.isfinite(value):
                    raise ValueError(f"non-finite metrics value {f.name}={value}")

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=np.float64)

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [
                        row.step,
                        row.episodes,
                        repr(row.mean_episode_reward),
                        repr(row.mean_episode_length),
                        repr(row.value_loss),
                        repr(row.baseline_loss),
                        repr(row.policy_loss),
                        repr(row.entropy),
                        repr(row.mean_active_agents),
                    ]
                )


def read_metrics_csv(path: str | Path) -> MetricsSeries:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        if header != COLUMNS:
            raise ValueError(f"unexpected metrics header in {path}: {header}")
        rows = [
            MetricsRow(
                step=int(r[0]),
                episodes=int(r[1]),
                mean_episode_reward=float(r[2]),
                mean_episode_length=float(r[3]),
                value_loss=float(r[4]),
                baseline_loss=float(r[5]),
                policy_loss=float(r[6]),
                entropy=float(r[7]),
                mean_active_agents=float(r[8]),
            )
            for r in reader
        ]
    return MetricsSeries(rows=rows)
