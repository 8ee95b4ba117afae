"""Baton relay mechanics: spawning chain, recency gating, exit despawn."""

from pathlib import Path

from mapoca.envs import BatonRelayEnv, load_action_script, run_action_script

FIXTURES = Path(__file__).parent / "fixtures"
PENALTY = 0.000125

ORB_LAYOUT = {
    "button": (0, 5),
    "exit": (5, 0),
    "spawn": (0, 0),
    "orbs": [(0, 2), (2, 2), (4, 4), (4, 5), (5, 5)],
}
BUTTON_LAYOUT = {
    "button": (0, 1),
    "exit": (5, 5),
    "spawn": (0, 0),
    "orbs": [(1, 0), (2, 0), (3, 3), (3, 4), (3, 5)],
}


class TestScriptedOrbGating:
    def test_full_script(self):
        env = BatonRelayEnv(layout=ORB_LAYOUT)
        env.reset(seed=0)
        script = load_action_script(FIXTURES / "baton_orb_gating.script")
        results = run_action_script(env, script)

        # step 2: the only (hence most recent) agent collects orb 1
        assert abs(results[1].group_reward - (1.0 - PENALTY)) < 1e-12

        # step 5: button press spawns agent 1 and a fresh orb appears
        spawn_step = results[4]
        assert len(spawn_step.spawns) == 1
        assert spawn_step.spawns[0].agent_id == 1
        assert 1 in spawn_step.observations

        # step 10: agent 0 stands on the new orb but is no longer the most
        # recently spawned agent, so nothing is collected
        parked = results[9]
        assert parked.group_reward == -2 * PENALTY

        # step 14: agent 1 (most recent) collects the same orb
        collected = results[13]
        assert abs(collected.group_reward - (1.0 - 2 * PENALTY)) < 1e-12

        # final step: agent 0 despawns on the exit cell for free
        last = results[-1]
        assert last.terminations == frozenset({0})
        assert abs(last.group_reward - (-2 * PENALTY)) < 1e-12
        assert not last.episode_done
        assert env.active_ids() == [1]

    def test_new_agent_acts_from_the_following_step(self):
        env = BatonRelayEnv(layout=ORB_LAYOUT)
        env.reset(seed=0)
        script = load_action_script(FIXTURES / "baton_orb_gating.script")
        results = run_action_script(env, script[:5])
        assert len(results[4].spawns) == 1
        # the next script line supplies two actions, which step() accepts
        result = env.step(dict(zip(env.active_ids(), script[5])))
        assert set(result.observations) == {0, 1}


class TestScriptedButtonGating:
    def test_older_agent_cannot_press(self):
        env = BatonRelayEnv(layout=BUTTON_LAYOUT)
        env.reset(seed=0)
        script = load_action_script(FIXTURES / "baton_button_gating.script")
        results = run_action_script(env, script)

        # step 5: agent 1 collects orb 2, arming the button
        assert abs(results[4].group_reward - (1.0 - 2 * PENALTY)) < 1e-12

        # step 6: agent 0 (older) stands on the armed button: no spawn
        assert results[5].spawns == ()
        # the can-press flag is still visible to both agents
        assert all(obs[3] == 1.0 for obs in results[5].observations.values())

        # step 10: agent 1 presses; agent 2 spawns even though the spawn
        # cell is occupied (first free cell in scan order)
        assert len(results[9].spawns) == 1
        assert results[9].spawns[0].agent_id == 2


class TestMechanics:
    def test_reset_spawns_a_single_agent(self):
        handles, observations = BatonRelayEnv().reset(seed=0)
        assert len(handles) == 1
        assert len(observations) == 1

    def test_step_penalty_scales_with_existing_agents(self):
        env = BatonRelayEnv(layout=ORB_LAYOUT)
        env.reset(seed=0)
        result = env.step({0: 0})
        assert abs(result.group_reward - (-PENALTY)) < 1e-15

    def test_episode_ends_after_orb_goal(self):
        env = BatonRelayEnv(orb_goal=1, layout=dict(ORB_LAYOUT, orbs=[(0, 1)]))
        env.reset(seed=0)
        result = env.step({0: 4})
        assert abs(result.group_reward - (1.0 - PENALTY)) < 1e-12
        assert result.episode_done
        assert result.observations == {}

    def test_everyone_leaving_ends_episode(self):
        env = BatonRelayEnv(layout=dict(ORB_LAYOUT, spawn=(5, 1)))
        env.reset(seed=0)
        result = env.step({0: 3})  # straight onto the exit cell
        assert result.terminations == frozenset({0})
        assert result.episode_done

    def test_max_agents_is_orb_goal_plus_one(self):
        assert BatonRelayEnv(orb_goal=7).max_agents == 8

    def test_agents_block_movement(self):
        env = BatonRelayEnv(layout=BUTTON_LAYOUT)
        env.reset(seed=0)
        script = load_action_script(FIXTURES / "baton_button_gating.script")
        run_action_script(env, script[:4])
        # agent 0 at (1,1), agent 1 at (1,0); moving agent 1 right is blocked
        positions_before = dict(env._agent_pos)
        env.step({0: 0, 1: 4})
        assert env._agent_pos[1] == positions_before[1]
