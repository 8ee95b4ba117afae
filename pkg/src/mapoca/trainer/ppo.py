"""Independent PPO: per-agent actor-critic with GAE, no group critic.

Each agent's critic sees only its own observation.  The shared group
reward is delivered in full to every active agent, but an agent that
terminates receives nothing afterwards -- there is no posthumous
mechanism, which is exactly what this baseline is for.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import tensorcore as tc
from ..critic import clipped_value_loss
from ..policy import ActorNet, policy_loss
from ..tensorcore import Adam, Array, Mlp
from .rollout import GroupTrajectory
from .updates import UpdateStats


@dataclass
class AgentStepSample:
    """One (agent, timestep) transition with its GAE advantage and return."""

    space_id: str
    observation: Array
    action: int
    old_log_prob: float
    advantage: float
    return_target: float
    old_value: float


def gae_advantages(
    rewards: Array,
    values: Array,
    next_values: Array,
    gamma: float,
    lam: float,
) -> tuple[Array, Array]:
    """Generalized advantage estimation over one agent's contiguous stream."""
    deltas = rewards + gamma * next_values - values
    advantages = np.zeros_like(deltas)
    running = 0.0
    for t in range(len(deltas) - 1, -1, -1):
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + values


@dataclass
class _Stream:
    observations: list
    actions: list
    log_probs: list
    rewards: list
    done: bool = False
    bootstrap_obs: Array | None = None


def _agent_streams(traj: GroupTrajectory) -> list[_Stream]:
    streams: dict[int, _Stream] = {}
    for step in traj.steps:
        for agent_id, action in step.actions.items():
            stream = streams.setdefault(
                agent_id, _Stream([], [], [], [])
            )
            stream.observations.append(step.observations[agent_id])
            stream.actions.append(action)
            stream.log_probs.append(step.records[agent_id].log_prob)
            stream.rewards.append(step.reward)
        for agent_id in step.terminations:
            if agent_id in streams:
                streams[agent_id].done = True
        if step.episode_done:
            for stream in streams.values():
                stream.done = True
    if not traj.terminal:
        for agent_id, stream in streams.items():
            if not stream.done:
                stream.bootstrap_obs = traj.final_observations.get(agent_id)
    return [s for _, s in sorted(streams.items())]


def build_ppo_samples(
    trajectories: Sequence[GroupTrajectory],
    space_id: str,
    value_nets: Mapping[str, Mlp],
    gamma: float,
    lam: float,
    normalize_advantages: bool,
) -> list[AgentStepSample]:
    samples: list[AgentStepSample] = []
    for traj in trajectories:
        for stream in _agent_streams(traj):
            obs = np.stack(stream.observations)
            with tc.no_grad():
                values = tc.reshape(value_nets[space_id](obs), (obs.shape[0],)).value
            if stream.done or stream.bootstrap_obs is None:
                tail = 0.0
            else:
                with tc.no_grad():
                    tail = float(
                        value_nets[space_id](
                            stream.bootstrap_obs.reshape(1, -1)
                        ).value[0, 0]
                    )
            next_values = np.concatenate([values[1:], [tail]])
            rewards = np.array(stream.rewards)
            advantages, returns = gae_advantages(
                rewards, values, next_values, gamma, lam
            )
            for i in range(obs.shape[0]):
                samples.append(
                    AgentStepSample(
                        space_id=space_id,
                        observation=obs[i],
                        action=int(stream.actions[i]),
                        old_log_prob=float(stream.log_probs[i]),
                        advantage=float(advantages[i]),
                        return_target=float(returns[i]),
                        old_value=float(values[i]),
                    )
                )
    if normalize_advantages and samples:
        flat = np.array([s.advantage for s in samples])
        mean, std = flat.mean(), flat.std()
        for s in samples:
            s.advantage = (s.advantage - mean) / (std + 1e-8)
    return samples


def ppo_update(
    samples: list[AgentStepSample],
    actors: Mapping[str, ActorNet],
    value_nets: Mapping[str, Mlp],
    optimizers: Sequence[Adam],
    epochs: int,
    minibatch_size: int,
    clip_epsilon: float,
    entropy_beta: float,
    rng: np.random.Generator,
) -> UpdateStats:
    value_losses, policy_losses, entropies = [], [], []
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(order), minibatch_size):
            chunk = [samples[i] for i in order[start : start + minibatch_size]]
            by_space: dict[str, list[AgentStepSample]] = {}
            for s in chunk:
                by_space.setdefault(s.space_id, []).append(s)
            total_loss = None
            v_total = 0.0
            p_total = 0.0
            h_total = 0.0
            for space_id, members in by_space.items():
                obs = np.stack([s.observation for s in members])
                actions = np.array([s.action for s in members], dtype=np.int64)
                old_lp = np.array([s.old_log_prob for s in members])
                adv = np.array([s.advantage for s in members])
                returns = np.array([s.return_target for s in members])
                old_v = np.array([s.old_value for s in members])

                pred = tc.reshape(value_nets[space_id](obs), (len(members),))
                v_loss = tc.reduce_mean(
                    clipped_value_loss(pred, returns, old_v, clip_epsilon)
                )
                new_lp, ent = actors[space_id].evaluate(obs, actions)
                p_loss = policy_loss(
                    new_lp, old_lp, adv, clip_epsilon, entropy_beta, ent
                )
                weight = len(members) / len(chunk)
                piece = tc.mul(tc.add(v_loss, p_loss), weight)
                total_loss = piece if total_loss is None else tc.add(total_loss, piece)
                v_total += float(v_loss.value) * weight
                p_total += float(p_loss.value) * weight
                h_total += float(ent.value.sum())
            for opt in optimizers:
                opt.zero_grad()
            tc.backward(total_loss)
            for opt in optimizers:
                opt.step()
            value_losses.append(v_total)
            policy_losses.append(p_total)
            entropies.append(h_total / len(chunk))
    return UpdateStats(
        value_loss=float(np.mean(value_losses)),
        baseline_loss=0.0,
        policy_loss=float(np.mean(policy_losses)),
        entropy=float(np.mean(entropies)),
    )
