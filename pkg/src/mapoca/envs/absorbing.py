"""Fixed-width absorbing-state view over a variable-population environment.

The wrapper exposes exactly ``n_max`` observation slots at every step.
Slots of agents that terminated early or have not yet spawned hold the
all-zeros observation, they stay there irrespective of submitted actions,
and actions submitted for absorbed slots never reach the inner
environment.  Slots are assigned by spawn order and are never reassigned
within an episode.  A per-slot activity mask is exposed for diagnostics
only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import AgentHandle, Array, EnvironmentFault, GroupEnv, StepResult


@dataclass
class WrapperReset:
    slot_observations: Array
    active_mask: Array
    handles: list[AgentHandle]
    observations: dict[int, Array]


@dataclass
class WrapperStep:
    slot_observations: Array
    active_mask: Array
    group_reward: float
    episode_done: bool
    inner: StepResult


class AbsorbingWrapper:
    """Always-``n_max``-slot view of an inner group environment."""

    def __init__(self, inner: GroupEnv, n_max: int):
        if n_max < inner.max_agents:
            raise ValueError(
                f"n_max {n_max} is below the inner environment's maximum "
                f"population {inner.max_agents}"
            )
        self.inner = inner
        self.n_max = n_max
        self.observation_dim = inner.observation_dim
        self.n_actions = inner.n_actions
        self._slot_of: dict[int, int] = {}
        self._next_slot = 0

    def slot_of(self, agent_id: int) -> int:
        return self._slot_of[agent_id]

    def _assign_slot(self, agent_id: int) -> None:
        if self._next_slot >= self.n_max:
            raise EnvironmentFault(
                f"inner environment spawned agent {agent_id} beyond the "
                f"declared n_max of {self.n_max}"
            )
        self._slot_of[agent_id] = self._next_slot
        self._next_slot += 1

    def _render_slots(self, observations: dict[int, Array]) -> tuple[Array, Array]:
        slots = np.zeros((self.n_max, self.observation_dim))
        mask = np.zeros(self.n_max, dtype=bool)
        for agent_id, obs in observations.items():
            slot = self._slot_of[agent_id]
            slots[slot] = obs
            mask[slot] = True
        return slots, mask

    def reset(self, seed: int) -> WrapperReset:
        handles, observations = self.inner.reset(seed)
        self._slot_of = {}
        self._next_slot = 0
        for handle in sorted(handles, key=lambda h: h.agent_id):
            self._assign_slot(handle.agent_id)
        slots, mask = self._render_slots(observations)
        return WrapperReset(
            slot_observations=slots,
            active_mask=mask,
            handles=handles,
            observations=observations,
        )

    def step(self, slot_actions: Sequence[int]) -> WrapperStep:
        """Apply per-slot actions; absorbed slots are ignored entirely."""
        if len(slot_actions) != self.n_max:
            raise ValueError(
                f"expected {self.n_max} slot actions, got {len(slot_actions)}"
            )
        active = {
            agent_id: slot
            for agent_id, slot in self._slot_of.items()
            if agent_id in set(self.inner.active_ids())
        }
        inner_actions = {
            agent_id: int(slot_actions[slot]) for agent_id, slot in active.items()
        }
        result = self.inner.step(inner_actions)
        for handle in result.spawns:
            self._assign_slot(handle.agent_id)
        slots, mask = self._render_slots(result.observations)
        return WrapperStep(
            slot_observations=slots,
            active_mask=mask,
            group_reward=result.group_reward,
            episode_done=result.episode_done,
            inner=result,
        )

    def state_snapshot(self) -> tuple:
        return (
            self.inner.state_snapshot(),
            tuple(sorted(self._slot_of.items())),
            self._next_slot,
        )


def wrap_absorbing(inner: GroupEnv, n_max: int) -> AbsorbingWrapper:
    """Wrap ``inner`` in a fixed-width absorbing-state view with ``n_max`` slots."""
    return AbsorbingWrapper(inner, n_max)
