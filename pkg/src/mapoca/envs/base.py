"""Variable-population group environment interface.

All environments share one group reward per step, native agent spawn and
terminate semantics, and seeded deterministic resets.  Agent ids are never
reused within an episode, and an agent that goes inactive stays inactive
until the episode resets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


class EnvironmentFault(RuntimeError):
    """An environment contract was violated at runtime."""


@dataclass
class AgentHandle:
    """Identity and space signature of one agent."""

    agent_id: int
    observation_space_id: str
    action_space_id: str
    active: bool = True


@dataclass
class StepResult:
    """One group transition.

    ``observations`` holds active agents only, keyed by id in ascending
    order.  ``group_reward`` is shared by every active agent.  Agents in
    ``terminations`` were active before the step; ``spawns`` carry fresh
    ids.  When ``episode_done`` is set every agent is inactive.
    """

    observations: dict[int, Array]
    group_reward: float
    terminations: frozenset[int]
    spawns: tuple[AgentHandle, ...]
    episode_done: bool


class GroupEnv:
    """Base class: id bookkeeping, action validation, seeded RNG."""

    observation_space_id: str = "obs"
    action_space_id: str = "act"
    observation_dim: int = 0
    n_actions: int = 0
    max_agents: int = 0

    def __init__(self) -> None:
        self._rng = np.random.default_rng(0)
        self._handles: dict[int, AgentHandle] = {}
        self._next_agent_id = 0
        self._episode_done = True

    # -- subclass hooks ------------------------------------------------

    def _reset_state(self) -> list[int]:
        """Lay out a fresh episode; return the ids of the initial agents."""
        raise NotImplementedError

    def _step_state(self, actions: dict[int, int]) -> StepResult:
        raise NotImplementedError

    def _observe(self, agent_id: int) -> Array:
        raise NotImplementedError

    # -- shared mechanics ----------------------------------------------

    def _new_handle(self) -> AgentHandle:
        handle = AgentHandle(
            agent_id=self._next_agent_id,
            observation_space_id=self.observation_space_id,
            action_space_id=self.action_space_id,
        )
        self._next_agent_id += 1
        self._handles[handle.agent_id] = handle
        return handle

    def active_ids(self) -> list[int]:
        return sorted(i for i, h in self._handles.items() if h.active)

    def _deactivate(self, agent_id: int) -> None:
        self._handles[agent_id].active = False

    def _observations(self) -> dict[int, Array]:
        return {i: self._observe(i) for i in self.active_ids()}

    def reset(self, seed: int) -> tuple[list[AgentHandle], dict[int, Array]]:
        """Start a new episode with a layout fully determined by ``seed``."""
        self._rng = np.random.default_rng(seed)
        self._handles = {}
        self._next_agent_id = 0
        self._episode_done = False
        self._reset_state()
        return list(self._handles.values()), self._observations()

    def step(self, actions: dict[int, int]) -> StepResult:
        if self._episode_done:
            raise EnvironmentFault("step called on a finished episode; reset first")
        active = set(self.active_ids())
        got = set(actions)
        if got != active:
            missing = sorted(active - got)
            extra = sorted(got - active)
            raise ValueError(
                f"actions must cover exactly the active agents; "
                f"missing {missing}, extra {extra}"
            )
        for agent_id, action in actions.items():
            if not 0 <= int(action) < self.n_actions:
                raise ValueError(
                    f"action {action} for agent {agent_id} outside "
                    f"[0, {self.n_actions})"
                )
        result = self._step_state({i: int(a) for i, a in actions.items()})
        if result.episode_done:
            self._episode_done = True
            for handle in self._handles.values():
                handle.active = False
        return result

    def state_snapshot(self) -> tuple:
        """Full comparable internal state, including the RNG stream."""
        return (self._snapshot_fields(), repr(self._rng.bit_generator.state))

    def _snapshot_fields(self) -> tuple:
        raise NotImplementedError
