"""Cooperative navigation: 3 agents cover 3 landmarks without colliding.

Continuous 2-D positions in [-1, 1]^2 with velocity damping; a discrete
5-action move set (no-op plus 4 unit accelerations).  The group reward per
step is the negated sum over landmarks of the distance to the closest
agent, minus 1 per colliding agent pair.  The population is fixed; the
episode ends after a step limit.
"""

from __future__ import annotations

import numpy as np

from .base import Array, GroupEnv, StepResult

N_AGENTS = 3
N_LANDMARKS = 3
AGENT_SIZE = 0.15
COLLISION_RADIUS = 2 * AGENT_SIZE
DT = 0.1
DAMPING = 0.25
ACCEL = 5.0
DEFAULT_EPISODE_LIMIT = 25

# no-op, +x, -x, +y, -y
_MOVES = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def simple_spread_reward(
    agent_positions: Array,
    landmark_positions: Array,
    collision_radius: float = COLLISION_RADIUS,
) -> float:
    """Group reward: -sum over landmarks of min agent distance, -1 per collision."""
    agents = np.asarray(agent_positions, dtype=np.float64)
    landmarks = np.asarray(landmark_positions, dtype=np.float64)
    distances = np.linalg.norm(landmarks[:, None, :] - agents[None, :, :], axis=-1)
    reward = -float(distances.min(axis=1).sum())
    n = agents.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(agents[i] - agents[j]) < collision_radius:
                reward -= 1.0
    return reward


class SimpleSpreadEnv(GroupEnv):
    """The particle cooperative-navigation task at its usual configuration."""

    observation_space_id = "simple_spread.agent"
    action_space_id = "simple_spread.move"
    # own velocity, own position, 3 landmark offsets, 2 teammate offsets
    observation_dim = 2 + 2 + 2 * N_LANDMARKS + 2 * (N_AGENTS - 1)
    n_actions = 5
    max_agents = N_AGENTS

    def __init__(self, episode_limit: int = DEFAULT_EPISODE_LIMIT):
        super().__init__()
        if episode_limit < 1:
            raise ValueError("episode_limit must be positive")
        self.episode_limit = episode_limit
        self._positions = np.zeros((N_AGENTS, 2))
        self._velocities = np.zeros((N_AGENTS, 2))
        self._landmarks = np.zeros((N_LANDMARKS, 2))
        self._t = 0

    def _reset_state(self) -> list[int]:
        ids = [self._new_handle().agent_id for _ in range(N_AGENTS)]
        self._positions = self._rng.uniform(-1.0, 1.0, size=(N_AGENTS, 2))
        self._velocities = np.zeros((N_AGENTS, 2))
        self._landmarks = self._rng.uniform(-1.0, 1.0, size=(N_LANDMARKS, 2))
        self._t = 0
        return ids

    def _step_state(self, actions: dict[int, int]) -> StepResult:
        for agent_id, action in actions.items():
            accel = _MOVES[action] * ACCEL
            self._velocities[agent_id] = (
                self._velocities[agent_id] * (1.0 - DAMPING) + accel * DT
            )
        self._positions = np.clip(
            self._positions + self._velocities * DT, -1.0, 1.0
        )
        self._t += 1
        reward = simple_spread_reward(self._positions, self._landmarks)
        done = self._t >= self.episode_limit
        observations = {} if done else self._observations()
        return StepResult(
            observations=observations,
            group_reward=reward,
            terminations=frozenset(),
            spawns=(),
            episode_done=done,
        )

    def _observe(self, agent_id: int) -> Array:
        own = self._positions[agent_id]
        parts = [self._velocities[agent_id], own]
        parts.extend(landmark - own for landmark in self._landmarks)
        parts.extend(
            self._positions[other] - own
            for other in range(N_AGENTS)
            if other != agent_id
        )
        return np.concatenate(parts)

    def _snapshot_fields(self) -> tuple:
        return (
            self._positions.tobytes(),
            self._velocities.tobytes(),
            self._landmarks.tobytes(),
            self._t,
        )
