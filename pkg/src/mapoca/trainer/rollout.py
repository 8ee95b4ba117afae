"""On-policy rollout collection over variable-population episodes.

A worker owns one environment (optionally behind the absorbing-state
wrapper) and the acting policies, and emits trajectories that span whole
episodes or truncate at the buffer boundary.  The group reward stream
keeps flowing after any individual agent's termination until the episode
ends, which is the data path that lets value reach terminated agents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..envs import AbsorbingWrapper, GroupEnv
from ..policy import ActionRecord, ActorNet
from ..tensorcore import Array


@dataclass
class GroupStep:
    """One recorded transition: who acted, what happened, what it paid."""

    observations: dict[int, Array]
    actions: dict[int, int]
    records: dict[int, ActionRecord]
    reward: float
    terminations: frozenset[int]
    spawned: tuple[int, ...]
    episode_done: bool
    slot_view: Array | None = None
    slots: dict[int, int] | None = None


@dataclass
class GroupTrajectory:
    """A whole or truncated episode segment."""

    steps: list[GroupStep]
    final_observations: dict[int, Array]
    terminal: bool
    final_slot_view: Array | None = None

    def agent_steps(self) -> int:
        return sum(len(step.actions) for step in self.steps)


@dataclass
class RolloutResult:
    trajectories: list[GroupTrajectory]
    env_steps: int
    agent_steps: int
    episodes: int
    episode_rewards: list[float]
    episode_lengths: list[int]


class RolloutWorker:
    """Drives one environment with the current actors across update windows."""

    def __init__(
        self,
        env: GroupEnv,
        actors: Mapping[str, ActorNet],
        seed: int,
        wrapper: AbsorbingWrapper | None = None,
    ):
        self.env = env
        self.actors = dict(actors)
        self.wrapper = wrapper
        seq = np.random.SeedSequence(seed)
        reset_seq, action_seq = seq.spawn(2)
        self._reset_rng = np.random.default_rng(reset_seq)
        self._action_rng = np.random.default_rng(action_seq)
        self._space_of: dict[int, str] = {}
        self._observations: dict[int, Array] = {}
        self._slot_view: Array | None = None
        self._episode_reward = 0.0
        self._episode_length = 0
        self._needs_reset = True

    def _reset_episode(self) -> None:
        seed = int(self._reset_rng.integers(0, 2**63 - 1))
        if self.wrapper is not None:
            result = self.wrapper.reset(seed)
            handles, observations = result.handles, result.observations
            self._slot_view = result.slot_observations
        else:
            handles, observations = self.env.reset(seed)
            self._slot_view = None
        self._space_of = {h.agent_id: h.observation_space_id for h in handles}
        self._observations = observations
        self._episode_reward = 0.0
        self._episode_length = 0
        self._needs_reset = False

    def _act(self) -> tuple[dict[int, int], dict[int, ActionRecord]]:
        ids = sorted(self._observations)
        actions: dict[int, int] = {}
        records: dict[int, ActionRecord] = {}
        by_space: dict[str, list[int]] = {}
        for agent_id in ids:
            by_space.setdefault(self._space_of[agent_id], []).append(agent_id)
        for space_id, members in by_space.items():
            stacked = np.stack([self._observations[a] for a in members])
            for agent_id, record in zip(
                members, self.actors[space_id].act_group(stacked, self._action_rng)
            ):
                actions[agent_id] = record.action
                records[agent_id] = record
        return actions, records

    def collect(self, min_agent_steps: int, max_env_steps: int) -> RolloutResult:
        """Gather at least ``min_agent_steps`` agent-steps (capped by env steps)."""
        trajectories: list[GroupTrajectory] = []
        steps: list[GroupStep] = []
        env_steps = 0
        agent_steps = 0
        episodes = 0
        episode_rewards: list[float] = []
        episode_lengths: list[int] = []

        while agent_steps < min_agent_steps and env_steps < max_env_steps:
            if self._needs_reset:
                self._reset_episode()
            actions, records = self._act()
            slot_view = self._slot_view
            slots = None
            if self.wrapper is not None:
                slots = {a: self.wrapper.slot_of(a) for a in actions}
                slot_actions = [0] * self.wrapper.n_max
                for agent_id, action in actions.items():
                    slot_actions[slots[agent_id]] = action
                wrapped = self.wrapper.step(slot_actions)
                result = wrapped.inner
                self._slot_view = wrapped.slot_observations
            else:
                result = self.env.step(actions)
            for handle in result.spawns:
                self._space_of[handle.agent_id] = handle.observation_space_id
            steps.append(
                GroupStep(
                    observations=self._observations,
                    actions=actions,
                    records=records,
                    reward=result.group_reward,
                    terminations=result.terminations,
                    spawned=tuple(h.agent_id for h in result.spawns),
                    episode_done=result.episode_done,
                    slot_view=slot_view,
                    slots=slots,
                )
            )
            env_steps += 1
            agent_steps += len(actions)
            self._episode_reward += result.group_reward
            self._episode_length += 1
            self._observations = result.observations
            if result.episode_done:
                episodes += 1
                episode_rewards.append(self._episode_reward)
                episode_lengths.append(self._episode_length)
                trajectories.append(
                    GroupTrajectory(steps=steps, final_observations={}, terminal=True)
                )
                steps = []
                self._needs_reset = True

        if steps:
            trajectories.append(
                GroupTrajectory(
                    steps=steps,
                    final_observations=dict(self._observations),
                    terminal=False,
                    final_slot_view=self._slot_view,
                )
            )
        return RolloutResult(
            trajectories=trajectories,
            env_steps=env_steps,
            agent_steps=agent_steps,
            episodes=episodes,
            episode_rewards=episode_rewards,
            episode_lengths=episode_lengths,
        )
