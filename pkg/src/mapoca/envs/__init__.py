"""Variable-population environments and the absorbing-state wrapper."""

from __future__ import annotations

from .absorbing import AbsorbingWrapper, WrapperReset, WrapperStep, wrap_absorbing
from .base import AgentHandle, EnvironmentFault, GroupEnv, StepResult
from .baton_relay import BatonRelayEnv
from .dungeon_run import DungeonRunEnv
from .scripts import load_action_script, run_action_script
from .simple_spread import SimpleSpreadEnv, simple_spread_reward

ENV_NAMES = ("simple_spread", "dungeon_run", "baton_relay")


def make_env(name: str, options: dict | None = None) -> GroupEnv:
    """Build an environment from its config name and ``env.*`` options."""
    options = dict(options or {})
    if name == "simple_spread":
        return SimpleSpreadEnv(
            episode_limit=options.pop("episode_limit", 25), **options
        )
    if name == "dungeon_run":
        return DungeonRunEnv(
            episode_limit=options.pop("episode_limit", 100),
            dragon_period=options.pop("dragon_period", 2),
            pink_dragons=options.pop("pink_dragons", False),
            **options,
        )
    if name == "baton_relay":
        return BatonRelayEnv(
            orb_goal=options.pop("orb_goal", 5),
            episode_limit=options.pop("episode_limit", 300),
            **options,
        )
    raise ValueError(f"unknown environment '{name}'; expected one of {ENV_NAMES}")


__all__ = [
    "AbsorbingWrapper",
    "AgentHandle",
    "BatonRelayEnv",
    "DungeonRunEnv",
    "ENV_NAMES",
    "EnvironmentFault",
    "GroupEnv",
    "SimpleSpreadEnv",
    "StepResult",
    "WrapperReset",
    "WrapperStep",
    "load_action_script",
    "make_env",
    "run_action_script",
    "simple_spread_reward",
    "wrap_absorbing",
]
