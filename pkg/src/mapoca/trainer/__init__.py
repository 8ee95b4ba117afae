"""Rollout collection, batch construction, and the three training loops."""

from __future__ import annotations

from .batches import MapocaCritic, StepSample, UpdateBatch, build_batches, minibatch_chunks
from .loops import NumericalAbort, TRAINERS, train_coma, train_mapoca, train_ppo
from .metrics import COLUMNS, MetricsRow, MetricsSeries, read_metrics_csv
from .ppo import AgentStepSample, build_ppo_samples, gae_advantages
from .rollout import GroupStep, GroupTrajectory, RolloutResult, RolloutWorker
from .updates import ComaCritic, ComaUpdater, MapocaUpdater, UpdateStats

__all__ = [
    "AgentStepSample",
    "COLUMNS",
    "ComaCritic",
    "ComaUpdater",
    "GroupStep",
    "GroupTrajectory",
    "MapocaCritic",
    "MapocaUpdater",
    "MetricsRow",
    "MetricsSeries",
    "NumericalAbort",
    "RolloutResult",
    "RolloutWorker",
    "StepSample",
    "TRAINERS",
    "UpdateBatch",
    "UpdateStats",
    "build_batches",
    "build_ppo_samples",
    "gae_advantages",
    "minibatch_chunks",
    "read_metrics_csv",
    "train_coma",
    "train_mapoca",
    "train_ppo",
]
