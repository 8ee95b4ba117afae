"""Absorbing wrapper: fixed-width view, zero slots, action irrelevance."""

import numpy as np
import pytest

from mapoca.envs import (
    BatonRelayEnv,
    DungeonRunEnv,
    EnvironmentFault,
    SimpleSpreadEnv,
    wrap_absorbing,
)

LAYOUT = {
    "agents": [(3, 2), (3, 4), (6, 6)],
    "dragon": (3, 3),
    "door": (0, 6),
    "portal": (6, 0),
}


class TestFixedWidthView:
    def test_all_active_means_no_padding(self):
        wrapper = wrap_absorbing(SimpleSpreadEnv(), 3)
        reset = wrapper.reset(seed=0)
        assert reset.slot_observations.shape == (3, 14)
        assert reset.active_mask.all()
        for agent_id, obs in reset.observations.items():
            assert np.array_equal(reset.slot_observations[wrapper.slot_of(agent_id)], obs)

    def test_unspawned_slots_are_zero(self):
        env = BatonRelayEnv()
        wrapper = wrap_absorbing(env, env.max_agents)
        reset = wrapper.reset(seed=0)
        assert reset.active_mask.sum() == 1
        assert np.all(reset.slot_observations[1:] == 0.0)

    def test_dead_slot_goes_to_zero_and_stays(self):
        env = DungeonRunEnv(layout=LAYOUT)
        wrapper = wrap_absorbing(env, 3)
        wrapper.reset(seed=0)
        step = wrapper.step([4, 0, 0])  # agent 0 walks into the dragon
        assert step.inner.terminations == frozenset({0})
        assert not step.active_mask[0]
        assert np.all(step.slot_observations[0] == 0.0)
        again = wrapper.step([2, 0, 0])
        assert np.all(again.slot_observations[0] == 0.0)

    def test_slots_reset_on_next_reset(self):
        env = DungeonRunEnv(layout=LAYOUT)
        wrapper = wrap_absorbing(env, 3)
        wrapper.reset(seed=0)
        wrapper.step([4, 0, 0])
        fresh = wrapper.reset(seed=1)
        assert fresh.active_mask.all()

    def test_n_max_below_environment_maximum_rejected(self):
        with pytest.raises(ValueError, match="below"):
            wrap_absorbing(SimpleSpreadEnv(), 2)

    def test_spawning_beyond_n_max_aborts(self):
        env = BatonRelayEnv(
            layout={
                "button": (0, 1),
                "exit": (5, 5),
                "spawn": (0, 0),
                "orbs": [(1, 0), (2, 0), (3, 0), (3, 1), (3, 2)],
            }
        )
        # under-declare the population on purpose (observation width follows)
        env.max_agents = 2
        env.observation_dim = 12 + 3 * (env.max_agents - 1)
        wrapper = wrap_absorbing(env, 2)
        wrapper.reset(seed=0)
        for slot_actions in ([2, 0], [1, 0], [4, 0], [2, 2], [0, 2],
                             [0, 1], [0, 1]):
            wrapper.step(slot_actions)
        with pytest.raises(EnvironmentFault, match="n_max"):
            wrapper.step([0, 4])  # second button press spawns a third agent


class TestTransitionIndependence:
    def test_absorbed_actions_never_reach_the_inner_state(self):
        # two wrappers, identical seeds and active actions; the absorbed
        # slots get different actions every step
        rng = np.random.default_rng(0)
        for trial in range(40):
            seed = int(rng.integers(2**31))
            env_a = DungeonRunEnv()
            env_b = DungeonRunEnv()
            wrapper_a = wrap_absorbing(env_a, 3)
            wrapper_b = wrap_absorbing(env_b, 3)
            wrapper_a.reset(seed=seed)
            wrapper_b.reset(seed=seed)
            mask = np.ones(3, dtype=bool)
            for _ in range(25):
                shared = rng.integers(0, 5, size=3)
                noise = rng.integers(0, 5, size=3)
                actions_a = np.where(mask, shared, noise).tolist()
                actions_b = np.where(mask, shared, rng.integers(0, 5, size=3)).tolist()
                step_a = wrapper_a.step(actions_a)
                step_b = wrapper_b.step(actions_b)
                assert wrapper_a.state_snapshot() == wrapper_b.state_snapshot()
                assert np.array_equal(step_a.slot_observations, step_b.slot_observations)
                mask = step_a.active_mask.copy()
                if step_a.episode_done:
                    break

    def test_submitting_actions_for_dead_slot_equals_submitting_none(self):
        results = []
        for dead_action in (0, 4):
            env = DungeonRunEnv(layout=LAYOUT)
            wrapper = wrap_absorbing(env, 3)
            wrapper.reset(seed=3)
            wrapper.step([4, 0, 0])  # kill agent 0
            step = wrapper.step([dead_action, 1, 2])
            results.append((wrapper.state_snapshot(), step.slot_observations))
        assert results[0][0] == results[1][0]
        assert np.array_equal(results[0][1], results[1][1])
