"""Grid dungeon: sacrifice one agent to the key dragon, take the key to the door.

A 7x7 grid with three agents, a key-holding dragon that random-walks
toward a portal, a door, and (optionally) two hunter dragons.  Running
into the key dragon removes both the agent and the dragon and drops the
key at that cell; a key-holding agent reaching the door earns the group
+1 and ends the episode.  The dragon reaching the portal ends the episode
with no reward.  The group must therefore sacrifice one agent so another
can finish.
"""

from __future__ import annotations

import numpy as np

from .base import Array, GroupEnv, StepResult

GRID_SIZE = 7
N_AGENTS = 3
N_HUNTERS = 2
DEFAULT_EPISODE_LIMIT = 100
DEFAULT_DRAGON_PERIOD = 2
DRAGON_NOISE = 0.25

# stay, up, down, left, right
_MOVES = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))


def _manhattan(a: tuple[int, int], b: tuple[int, int]) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


class DungeonRunEnv(GroupEnv):
    """Sacrifice-and-escape dungeon on a small grid."""

    observation_space_id = "dungeon_run.agent"
    action_space_id = "dungeon_run.move"
    # own pos, 2 teammate slots, dragon, ground key, door, portal,
    # own/team key bits, 2 hunter slots
    observation_dim = 2 + 3 * (N_AGENTS - 1) + 3 + 3 + 2 + 2 + 1 + 1 + 3 * N_HUNTERS
    n_actions = 5
    max_agents = N_AGENTS

    def __init__(
        self,
        episode_limit: int = DEFAULT_EPISODE_LIMIT,
        dragon_period: int = DEFAULT_DRAGON_PERIOD,
        pink_dragons: bool = False,
        layout: dict | None = None,
    ):
        super().__init__()
        if episode_limit < 1 or dragon_period < 1:
            raise ValueError("episode_limit and dragon_period must be positive")
        self.episode_limit = episode_limit
        self.dragon_period = dragon_period
        self.pink_dragons = pink_dragons
        self._fixed_layout = layout
        self._agent_pos: dict[int, tuple[int, int]] = {}
        self._has_key: dict[int, bool] = {}
        self._dragon: tuple[int, int] | None = None
        self._hunters: list[tuple[int, int]] = []
        self._key: tuple[int, int] | None = None
        self._door = (0, 0)
        self._portal = (0, 0)
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

    def _reset_state(self) -> list[int]:
        ids = [self._new_handle().agent_id for _ in range(N_AGENTS)]
        if self._fixed_layout is not None:
            layout = self._fixed_layout
            self._agent_pos = {
                agent_id: tuple(layout["agents"][i]) for i, agent_id in enumerate(ids)
            }
            self._dragon = tuple(layout["dragon"])
            self._door = tuple(layout["door"])
            self._portal = tuple(layout["portal"])
            self._hunters = (
                [tuple(c) for c in layout.get("hunters", ())]
                if self.pink_dragons
                else []
            )
        else:
            taken: set[tuple[int, int]] = set()
            self._portal = self._random_cell(taken)
            taken.add(self._portal)
            self._door = self._random_cell(taken)
            taken.add(self._door)
            while True:
                dragon = self._random_cell(taken)
                if _manhattan(dragon, self._portal) >= 6:
                    break
            self._dragon = dragon
            taken.add(dragon)
            self._agent_pos = {}
            for agent_id in ids:
                cell = self._random_cell(taken)
                self._agent_pos[agent_id] = cell
                taken.add(cell)
            self._hunters = []
            if self.pink_dragons:
                for _ in range(N_HUNTERS):
                    cell = self._random_cell(taken)
                    self._hunters.append(cell)
                    taken.add(cell)
        self._has_key = {agent_id: False for agent_id in ids}
        self._key = None
        self._t = 0
        return ids

    # -- dynamics ----------------------------------------------------------

    def _toward(self, src: tuple[int, int], dst: tuple[int, int]) -> tuple[int, int]:
        dr, dc = dst[0] - src[0], dst[1] - src[1]
        if abs(dr) >= abs(dc) and dr != 0:
            return (src[0] + (1 if dr > 0 else -1), src[1])
        if dc != 0:
            return (src[0], src[1] + (1 if dc > 0 else -1))
        return src

    def _sacrifice(self, removed: set[int]) -> None:
        """Collide the lowest-id agent on the dragon's cell with the dragon."""
        if self._dragon is None:
            return
        here = [
            agent_id
            for agent_id in self.active_ids()
            if agent_id not in removed and self._agent_pos[agent_id] == self._dragon
        ]
        if not here:
            return
        victim = min(here)
        removed.add(victim)
        self._deactivate(victim)
        self._key = self._dragon
        self._dragon = None

    def _step_state(self, actions: dict[int, int]) -> StepResult:
        self._t += 1
        removed: set[int] = set()

        for agent_id in sorted(actions):
            dr, dc = _MOVES[actions[agent_id]]
            r, c = self._agent_pos[agent_id]
            nr, nc = r + dr, c + dc
            if 0 <= nr < GRID_SIZE and 0 <= nc < GRID_SIZE:
                self._agent_pos[agent_id] = (nr, nc)

        self._sacrifice(removed)

        if self._key is not None:
            takers = [
                agent_id
                for agent_id in self.active_ids()
                if agent_id not in removed and self._agent_pos[agent_id] == self._key
            ]
            if takers:
                self._has_key[min(takers)] = True
                self._key = None

        reward = 0.0
        done = False
        escaped = any(
            self._has_key[agent_id] and self._agent_pos[agent_id] == self._door
            for agent_id in self.active_ids()
            if agent_id not in removed
        )
        if escaped:
            reward = 1.0
            done = True

        if not done and self.pink_dragons:
            for h, hunter in enumerate(self._hunters):
                prey = [
                    agent_id
                    for agent_id in self.active_ids()
                    if agent_id not in removed
                ]
                if not prey:
                    break
                target = min(
                    prey,
                    key=lambda a: (_manhattan(hunter, self._agent_pos[a]), a),
                )
                self._hunters[h] = self._toward(hunter, self._agent_pos[target])
                for agent_id in prey:
                    if self._agent_pos[agent_id] == self._hunters[h]:
                        removed.add(agent_id)
                        self._deactivate(agent_id)
                        if self._has_key[agent_id]:
                            self._key = self._agent_pos[agent_id]

        # the dragon walks over agents harmlessly; slaying it requires an
        # agent to be on its cell after the agents' own move phase
        if not done and self._dragon is not None and self._t % self.dragon_period == 0:
            if self._rng.random() < DRAGON_NOISE:
                dr, dc = _MOVES[1 + int(self._rng.integers(4))]
                nr, nc = self._dragon[0] + dr, self._dragon[1] + dc
                if 0 <= nr < GRID_SIZE and 0 <= nc < GRID_SIZE:
                    self._dragon = (nr, nc)
            else:
                self._dragon = self._toward(self._dragon, self._portal)
            if self._dragon == self._portal:
                done = True

        for agent_id in removed:
            self._deactivate(agent_id)

        if self._t >= self.episode_limit:
            done = True
        if not self.active_ids():
            done = True

        observations = {} if done else self._observations()
        return StepResult(
            observations=observations,
            group_reward=reward,
            terminations=frozenset(removed),
            spawns=(),
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
        for other in range(N_AGENTS):
            if other == agent_id:
                continue
            if self._handles[other].active:
                parts.extend(rel(self._agent_pos[other]))
            else:
                parts.extend([0.0, 0.0, 0.0])
        parts.extend(rel(self._dragon))
        parts.extend(rel(self._key))
        parts.extend([(self._door[0] - own[0]) / scale, (self._door[1] - own[1]) / scale])
        parts.extend(
            [(self._portal[0] - own[0]) / scale, (self._portal[1] - own[1]) / scale]
        )
        parts.append(1.0 if self._has_key[agent_id] else 0.0)
        parts.append(
            1.0
            if any(self._has_key[a] for a in self.active_ids() if a != agent_id)
            else 0.0
        )
        for h in range(N_HUNTERS):
            if self.pink_dragons and h < len(self._hunters):
                parts.extend(rel(self._hunters[h]))
            else:
                parts.extend([0.0, 0.0, 0.0])
        return np.array(parts)

    def _snapshot_fields(self) -> tuple:
        return (
            tuple(sorted(self._agent_pos.items())),
            tuple(sorted(self._has_key.items())),
            self._dragon,
            tuple(self._hunters),
            self._key,
            self._door,
            self._portal,
            self._t,
            tuple(sorted((i, h.active) for i, h in self._handles.items())),
        )
