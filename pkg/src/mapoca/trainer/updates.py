"""Minibatch update step shared by the MA-POCA and COMA loops.

The two algorithms differ only in how value and baseline predictions are
assembled from a chunk of timestep samples; the clipped losses, the policy
update, and the epoch/minibatch schedule are identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import tensorcore as tc
from ..critic import critic_losses
from ..policy import ActorNet, policy_loss
from ..tensorcore import Adam, Array, DiffNode
from .batches import StepSample, UpdateBatch, minibatch_chunks


@dataclass
class UpdateStats:
    value_loss: float
    baseline_loss: float
    policy_loss: float
    entropy: float


class MapocaUpdater:
    """Assembles attention-critic predictions grouped by active-agent count."""

    def __init__(self, value_net, baseline_net, space_id: str):
        self.value_net = value_net
        self.baseline_net = baseline_net
        self.space_id = space_id

    def value_predictions(
        self, samples: Sequence[StepSample]
    ) -> tuple[DiffNode, Array, Array]:
        groups: dict[int, list[StepSample]] = {}
        for s in samples:
            groups.setdefault(s.k, []).append(s)
        nodes, targets, olds = [], [], []
        for k, members in groups.items():
            stacked = np.stack([s.observations for s in members])
            nodes.append(self.value_net.value_nodes(self.space_id, stacked))
            targets.extend(s.y for s in members)
            olds.extend(s.old_value for s in members)
        pred = nodes[0] if len(nodes) == 1 else tc.concat(nodes, axis=0)
        return pred, np.array(targets), np.array(olds)

    def baseline_predictions(
        self, samples: Sequence[StepSample]
    ) -> tuple[DiffNode, Array, Array]:
        groups: dict[int, list[StepSample]] = {}
        for s in samples:
            groups.setdefault(s.k, []).append(s)
        nodes, targets, olds = [], [], []
        for k, members in groups.items():
            focus_rows, others_obs_rows, others_act_rows = [], [], []
            keep = ~np.eye(k, dtype=bool)
            for s in members:
                obs, acts = s.observations, s.actions
                others_obs = np.broadcast_to(obs, (k, k, obs.shape[1]))[keep].reshape(
                    k, k - 1, obs.shape[1]
                )
                others_act = np.broadcast_to(acts, (k, k))[keep].reshape(k, k - 1)
                focus_rows.append(obs)
                others_obs_rows.append(others_obs)
                others_act_rows.append(others_act)
                targets.extend([s.y] * k)
                olds.extend(s.old_baselines)
            nodes.append(
                self.baseline_net.baseline_nodes(
                    self.space_id,
                    np.concatenate(focus_rows, axis=0),
                    np.concatenate(others_obs_rows, axis=0),
                    np.concatenate(others_act_rows, axis=0),
                )
            )
        pred = nodes[0] if len(nodes) == 1 else tc.concat(nodes, axis=0)
        return pred, np.array(targets), np.array(olds)


class ComaUpdater:
    """Assembles fixed-width fully connected predictions over slot views."""

    def __init__(self, value_net, baseline_net, n_max: int, n_actions: int):
        self.value_net = value_net
        self.baseline_net = baseline_net
        self.n_max = n_max
        self.n_actions = n_actions

    def value_predictions(
        self, samples: Sequence[StepSample]
    ) -> tuple[DiffNode, Array, Array]:
        inputs = np.stack([s.slot_view.reshape(-1) for s in samples])
        pred = tc.reshape(self.value_net(inputs), (len(samples),))
        return (
            pred,
            np.array([s.y for s in samples]),
            np.array([s.old_value for s in samples]),
        )

    def baseline_input(self, sample: StepSample, j: int) -> Array:
        onehot = np.zeros((self.n_max, self.n_actions))
        for position, slot in enumerate(sample.slot_indices):
            if position != j:
                onehot[slot, sample.actions[position]] = 1.0
        return np.concatenate([sample.slot_view.reshape(-1), onehot.reshape(-1)])

    def baseline_predictions(
        self, samples: Sequence[StepSample]
    ) -> tuple[DiffNode, Array, Array]:
        rows, targets, olds = [], [], []
        for s in samples:
            for j in range(s.k):
                rows.append(self.baseline_input(s, j))
                targets.append(s.y)
                olds.append(s.old_baselines[j])
        pred = tc.reshape(self.baseline_net(np.stack(rows)), (len(rows),))
        return pred, np.array(targets), np.array(olds)


class ComaCritic:
    """No-grad slot-view evaluation used when building COMA batches."""

    def __init__(self, updater: ComaUpdater):
        self.updater = updater

    def state_values(self, trajectories) -> list[Array]:
        out = []
        for traj in trajectories:
            horizon = len(traj.steps)
            views = [step.slot_view.reshape(-1) for step in traj.steps]
            if not traj.terminal:
                views.append(traj.final_slot_view.reshape(-1))
            with tc.no_grad():
                values = tc.reshape(
                    self.updater.value_net(np.stack(views)), (len(views),)
                ).value
            if traj.terminal:
                values = np.concatenate([values, [0.0]])
            out.append(values[: horizon + 1])
        return out

    def baselines(self, trajectories) -> list[list[Array]]:
        out = []
        for traj in trajectories:
            per_step = []
            for step in traj.steps:
                ids = tuple(sorted(step.observations))
                sample = StepSample(
                    space_id="",
                    k=len(ids),
                    observations=np.stack([step.observations[a] for a in ids]),
                    agent_ids=ids,
                    actions=np.array([step.actions[a] for a in ids], dtype=np.int64),
                    old_log_probs=np.zeros(len(ids)),
                    y=0.0,
                    old_value=0.0,
                    old_baselines=np.zeros(len(ids)),
                    advantages=np.zeros(len(ids)),
                    slot_view=step.slot_view,
                    slot_indices=np.array(
                        [step.slots[a] for a in ids], dtype=np.int64
                    ),
                )
                rows = np.stack(
                    [self.updater.baseline_input(sample, j) for j in range(sample.k)]
                )
                with tc.no_grad():
                    per_step.append(
                        tc.reshape(self.updater.baseline_net(rows), (sample.k,)).value
                    )
            out.append(per_step)
        return out


def _policy_pieces(
    samples: Sequence[StepSample], actors: Mapping[str, ActorNet],
    clip_epsilon: float, entropy_beta: float,
) -> tuple[DiffNode, float]:
    """Clipped policy loss over every (agent, timestep) row of the chunk."""
    by_space: dict[str, list[StepSample]] = {}
    for s in samples:
        by_space.setdefault(s.space_id, []).append(s)
    total_rows = sum(s.k for s in samples)
    loss = None
    entropy_sum = 0.0
    for space_id, members in by_space.items():
        obs = np.concatenate([s.observations for s in members], axis=0)
        actions = np.concatenate([s.actions for s in members])
        old_lp = np.concatenate([s.old_log_probs for s in members])
        adv = np.concatenate([s.advantages for s in members])
        new_lp, entropies = actors[space_id].evaluate(obs, actions)
        piece = policy_loss(
            new_lp, old_lp, adv, clip_epsilon, entropy_beta, entropies
        )
        weight = obs.shape[0] / total_rows
        weighted = tc.mul(piece, weight)
        loss = weighted if loss is None else tc.add(loss, weighted)
        entropy_sum += float(entropies.value.sum())
    return loss, entropy_sum / total_rows


def ctde_update(
    batch: UpdateBatch,
    updater,
    actors: Mapping[str, ActorNet],
    optimizers: Sequence[Adam],
    epochs: int,
    minibatch_size: int,
    clip_epsilon: float,
    entropy_beta: float,
    rng: np.random.Generator,
) -> UpdateStats:
    """Run the epoch/minibatch schedule once over a collected buffer."""
    agent_counts = [s.k for s in batch.samples]
    value_losses, baseline_losses, policy_losses, entropies = [], [], [], []
    for _ in range(epochs):
        for chunk in minibatch_chunks(
            len(batch.samples), agent_counts, minibatch_size, rng
        ):
            samples = [batch.samples[i] for i in chunk]
            v_pred, v_target, v_old = updater.value_predictions(samples)
            b_pred, b_target, b_old = updater.baseline_predictions(samples)
            v_loss, b_loss = critic_losses(
                v_pred, v_target, v_old, b_pred, b_target, b_old, clip_epsilon
            )
            p_loss, mean_entropy = _policy_pieces(
                samples, actors, clip_epsilon, entropy_beta
            )
            total = tc.add(tc.add(v_loss, b_loss), p_loss)
            for opt in optimizers:
                opt.zero_grad()
            tc.backward(total)
            for opt in optimizers:
                opt.step()
            value_losses.append(float(v_loss.value))
            baseline_losses.append(float(b_loss.value))
            policy_losses.append(float(p_loss.value))
            entropies.append(mean_entropy)
    return UpdateStats(
        value_loss=float(np.mean(value_losses)),
        baseline_loss=float(np.mean(baseline_losses)),
        policy_loss=float(np.mean(policy_losses)),
        entropy=float(np.mean(entropies)),
    )
