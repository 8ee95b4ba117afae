"""Update-batch construction shared by the MA-POCA and COMA loops.

Every sampled timestep yields one value sample, one baseline sample per
active agent (the per-agent permutations of the joint observation), and
one policy sample per active agent -- and all of them regress against the
numerically identical y(lambda) target for that timestep.  Old predictions
for trust-region clipping are snapshotted here, at batch-build time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..critic import BaselineNet, ValueNet, compute_lambda_targets
from ..tensorcore import Array
from .rollout import GroupStep, GroupTrajectory


@dataclass
class StepSample:
    """One timestep's worth of value, baseline, and policy samples."""

    space_id: str
    k: int
    observations: Array  # (k, obs_dim), ascending agent id
    agent_ids: tuple[int, ...]
    actions: Array  # (k,) int
    old_log_probs: Array  # (k,)
    y: float
    old_value: float
    old_baselines: Array  # (k,)
    advantages: Array  # (k,)
    slot_view: Array | None = None  # (n_max, obs_dim) under the absorbing view
    slot_indices: Array | None = None  # (k,) slot of each active agent


@dataclass
class UpdateBatch:
    samples: list[StepSample]

    def agent_steps(self) -> int:
        return sum(s.k for s in self.samples)


def _step_matrix(step: GroupStep) -> tuple[tuple[int, ...], Array]:
    ids = tuple(sorted(step.observations))
    return ids, np.stack([step.observations[i] for i in ids])


class MapocaCritic:
    """Attention value and baseline networks over active agents only."""

    def __init__(self, value_net: ValueNet, baseline_net: BaselineNet, space_id: str):
        self.value_net = value_net
        self.baseline_net = baseline_net
        self.space_id = space_id

    def state_values(self, trajectories: Sequence[GroupTrajectory]) -> list[Array]:
        """Per trajectory, V(s_0..s_T); V(s_T) is 0 for terminal episodes."""
        jobs: dict[int, list[tuple[int, int, Array]]] = {}
        lengths = []
        for i, traj in enumerate(trajectories):
            horizon = len(traj.steps)
            lengths.append(horizon)
            for t, step in enumerate(traj.steps):
                ids, obs = _step_matrix(step)
                jobs.setdefault(len(ids), []).append((i, t, obs))
            if not traj.terminal:
                ids = tuple(sorted(traj.final_observations))
                obs = np.stack([traj.final_observations[a] for a in ids])
                jobs.setdefault(len(ids), []).append((i, horizon, obs))
        out = [np.zeros(h + 1) for h in lengths]
        for k, entries in jobs.items():
            stacked = np.stack([obs for _, _, obs in entries])
            values = self.value_net.batch_values(self.space_id, stacked)
            for (i, t, _), v in zip(entries, values):
                out[i][t] = v
        return out

    def baselines(self, trajectories: Sequence[GroupTrajectory]) -> list[list[Array]]:
        """Per trajectory and timestep, baselines for the active agents."""
        jobs: dict[int, list[tuple[int, int, int, Array, Array, Array]]] = {}
        for i, traj in enumerate(trajectories):
            for t, step in enumerate(traj.steps):
                ids, obs = _step_matrix(step)
                k = len(ids)
                actions = np.array([step.actions[a] for a in ids], dtype=np.int64)
                keep = ~np.eye(k, dtype=bool)
                others_obs = np.broadcast_to(obs, (k, k, obs.shape[1]))[keep].reshape(
                    k, k - 1, obs.shape[1]
                )
                others_act = np.broadcast_to(actions, (k, k))[keep].reshape(k, k - 1)
                for j in range(k):
                    jobs.setdefault(k, []).append(
                        (i, t, j, obs[j], others_obs[j], others_act[j])
                    )
        out: list[list[Array]] = [
            [np.zeros(len(step.observations)) for step in traj.steps]
            for traj in trajectories
        ]
        for k, entries in jobs.items():
            focus = np.stack([e[3] for e in entries])
            others_obs = np.stack([e[4] for e in entries])
            others_act = np.stack([e[5] for e in entries])
            values = self.baseline_net.batch_baselines(
                self.space_id, focus, others_obs, others_act
            )
            for (i, t, j, _, _, _), b in zip(entries, values):
                out[i][t][j] = b
        return out


def build_batches(
    trajectories: Sequence[GroupTrajectory],
    critic,
    gamma: float,
    lam: float,
    normalize_advantages: bool,
    space_id: str,
) -> UpdateBatch:
    """Compute shared y(lambda) targets and assemble per-timestep samples."""
    values = critic.state_values(trajectories)
    baselines = critic.baselines(trajectories)
    samples: list[StepSample] = []
    for traj, v, traj_baselines in zip(trajectories, values, baselines):
        rewards = np.array([step.reward for step in traj.steps])
        targets = compute_lambda_targets(
            rewards, v[1:], traj.terminal, gamma, lam
        ).y
        for t, step in enumerate(traj.steps):
            ids = tuple(sorted(step.observations))
            obs = np.stack([step.observations[a] for a in ids])
            old_b = traj_baselines[t]
            slots = None
            if step.slots is not None:
                slots = np.array([step.slots[a] for a in ids], dtype=np.int64)
            samples.append(
                StepSample(
                    space_id=space_id,
                    k=len(ids),
                    observations=obs,
                    agent_ids=ids,
                    actions=np.array([step.actions[a] for a in ids], dtype=np.int64),
                    old_log_probs=np.array(
                        [step.records[a].log_prob for a in ids]
                    ),
                    y=float(targets[t]),
                    old_value=float(v[t]),
                    old_baselines=old_b,
                    advantages=targets[t] - old_b,
                    slot_view=step.slot_view,
                    slot_indices=slots,
                )
            )
    if normalize_advantages and samples:
        flat = np.concatenate([s.advantages for s in samples])
        mean = flat.mean()
        std = flat.std()
        for s in samples:
            s.advantages = (s.advantages - mean) / (std + 1e-8)
    return UpdateBatch(samples=samples)


def minibatch_chunks(
    n_samples: int,
    agent_counts: Sequence[int],
    minibatch_size: int,
    rng: np.random.Generator,
) -> Iterator[list[int]]:
    """Shuffled timestep index chunks of roughly ``minibatch_size`` agent-steps."""
    order = rng.permutation(n_samples)
    chunk: list[int] = []
    weight = 0
    for index in order:
        chunk.append(int(index))
        weight += agent_counts[index]
        if weight >= minibatch_size:
            yield chunk
            chunk = []
            weight = 0
    if chunk:
        yield chunk
