"""Grid relay: collect the orb, press the button, hand over to the new agent.

A 6x6 grid starting with a single agent, an orb, and a button.  Only the
most recently spawned active agent can collect the orb or press the button;
pressing (allowed once the current orb is collected) spawns a new agent and
a new orb.  Each orb is worth +1 to the group, the episode ends after a
configurable number of orbs, and every step costs 0.000125 times the number
of existing agents.  Agents block each other's movement and can despawn for
free on the exit cell to clear space.
"""

from __future__ import annotations

import numpy as np

from .base import Array, GroupEnv, StepResult

GRID_SIZE = 6
DEFAULT_ORB_GOAL = 5
DEFAULT_EPISODE_LIMIT = 300
STEP_PENALTY_PER_AGENT = 0.000125

# stay, up, down, left, right
_MOVES = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))


class BatonRelayEnv(GroupEnv):
    """Spawn-chain orb collection on a small grid."""

    observation_space_id = "baton_relay.agent"
    action_space_id = "baton_relay.move"
    n_actions = 5

    def __init__(
        self,
        orb_goal: int = DEFAULT_ORB_GOAL,
        episode_limit: int = DEFAULT_EPISODE_LIMIT,
        layout: dict | None = None,
    ):
        super().__init__()
        if orb_goal < 1 or episode_limit < 1:
            raise ValueError("orb_goal and episode_limit must be positive")
        self.orb_goal = orb_goal
        self.episode_limit = episode_limit
        self._fixed_layout = layout
        self._scripted_orbs: list[tuple[int, int]] = []
        self.max_agents = orb_goal + 1
        # own pos, most-recent flag, can-press flag, orb slot, button, exit,
        # teammate slots by recency, collected-orbs fraction
        self.observation_dim = 2 + 1 + 1 + 3 + 2 + 2 + 3 * (self.max_agents - 1) + 1
        self._agent_pos: dict[int, tuple[int, int]] = {}
        self._button = (0, 0)
        self._exit = (0, 0)
        self._spawn = (0, 0)
        self._orb: tuple[int, int] | None = None
        self._can_press = False
        self._orbs_collected = 0
        self._t = 0

    # -- layout ----------------------------------------------------------

    def _random_cell(self, taken: set[tuple[int, int]]) -> tuple[int, int]:
        while True:
            cell = (
                int(self._rng.integers(GRID_SIZE)),
                int(self._rng.integers(GRID_SIZE)),
            )
            if cell not in taken:
                return cell

    def _place_orb(self) -> None:
        if self._scripted_orbs:
            self._orb = self._scripted_orbs.pop(0)
            return
        taken = {self._button, self._exit}
        taken.update(self._agent_pos[a] for a in self.active_ids())
        self._orb = self._random_cell(taken)

    def _reset_state(self) -> list[int]:
        if self._fixed_layout is not None:
            self._button = tuple(self._fixed_layout["button"])
            self._exit = tuple(self._fixed_layout["exit"])
            self._spawn = tuple(self._fixed_layout["spawn"])
            self._scripted_orbs = [tuple(c) for c in self._fixed_layout["orbs"]]
        else:
            taken: set[tuple[int, int]] = set()
            self._button = self._random_cell(taken)
            taken.add(self._button)
            self._exit = self._random_cell(taken)
            taken.add(self._exit)
            self._spawn = self._random_cell(taken)
        first = self._new_handle()
        self._agent_pos = {first.agent_id: self._spawn}
        self._can_press = False
        self._orbs_collected = 0
        self._t = 0
        self._place_orb()
        return [first.agent_id]

    # -- dynamics ----------------------------------------------------------

    def _most_recent_active(self) -> int | None:
        ids = self.active_ids()
        return max(ids) if ids else None

    def _spawn_agent(self) -> "AgentHandle":
        occupied = {self._agent_pos[a] for a in self.active_ids()}
        cell = self._spawn
        if cell in occupied:
            for index in range(GRID_SIZE * GRID_SIZE):
                candidate = (index // GRID_SIZE, index % GRID_SIZE)
                if candidate not in occupied:
                    cell = candidate
                    break
        handle = self._new_handle()
        self._agent_pos[handle.agent_id] = cell
        return handle

    def _step_state(self, actions: dict[int, int]) -> StepResult:
        self._t += 1
        acting = sorted(actions)
        penalty = STEP_PENALTY_PER_AGENT * len(acting)

        # Agents move in id order; an occupied target cell blocks the move.
        for agent_id in acting:
            dr, dc = _MOVES[actions[agent_id]]
            r, c = self._agent_pos[agent_id]
            nr, nc = r + dr, c + dc
            if not (0 <= nr < GRID_SIZE and 0 <= nc < GRID_SIZE):
                continue
            occupied = {
                self._agent_pos[other] for other in self.active_ids() if other != agent_id
            }
            if (nr, nc) not in occupied:
                self._agent_pos[agent_id] = (nr, nc)

        removed: set[int] = set()
        for agent_id in list(self.active_ids()):
            if self._agent_pos[agent_id] == self._exit:
                removed.add(agent_id)
                self._deactivate(agent_id)

        reward = -penalty
        spawned: tuple = ()
        runner = self._most_recent_active()

        if (
            runner is not None
            and self._orb is not None
            and self._agent_pos[runner] == self._orb
        ):
            reward += 1.0
            self._orbs_collected += 1
            self._orb = None
            self._can_press = True

        if (
            runner is not None
            and self._can_press
            and self._orbs_collected < self.orb_goal
            and self._agent_pos[runner] == self._button
        ):
            self._can_press = False
            handle = self._spawn_agent()
            spawned = (handle,)
            self._place_orb()

        done = (
            self._orbs_collected >= self.orb_goal
            or self._t >= self.episode_limit
            or not self.active_ids()
        )
        observations = {} if done else self._observations()
        return StepResult(
            observations=observations,
            group_reward=reward,
            terminations=frozenset(removed),
            spawns=spawned,
            episode_done=done,
        )

    # -- observation ----------------------------------------------------------

    def _observe(self, agent_id: int) -> Array:
        scale = GRID_SIZE - 1
        own = self._agent_pos[agent_id]

        def rel(cell: tuple[int, int] | None) -> list[float]:
            if cell is None:
                return [0.0, 0.0, 0.0]
            return [1.0, (cell[0] - own[0]) / scale, (cell[1] - own[1]) / scale]

        parts: list[float] = [2.0 * own[0] / scale - 1.0, 2.0 * own[1] / scale - 1.0]
        parts.append(1.0 if agent_id == self._most_recent_active() else 0.0)
        parts.append(1.0 if self._can_press else 0.0)
        parts.extend(rel(self._orb))
        parts.extend(
            [(self._button[0] - own[0]) / scale, (self._button[1] - own[1]) / scale]
        )
        parts.extend(
            [(self._exit[0] - own[0]) / scale, (self._exit[1] - own[1]) / scale]
        )
        teammates = sorted(
            (other for other in self.active_ids() if other != agent_id), reverse=True
        )
        for slot in range(self.max_agents - 1):
            if slot < len(teammates):
                parts.extend(rel(self._agent_pos[teammates[slot]]))
            else:
                parts.extend([0.0, 0.0, 0.0])
        parts.append(self._orbs_collected / self.orb_goal)
        return np.array(parts)

    def _snapshot_fields(self) -> tuple:
        return (
            tuple(sorted(self._agent_pos.items())),
            self._button,
            self._exit,
            self._spawn,
            self._orb,
            self._can_press,
            self._orbs_collected,
            self._t,
            tuple(sorted((i, h.active) for i, h in self._handles.items())),
        )
