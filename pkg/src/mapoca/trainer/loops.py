"""The three training loops: MA-POCA, COMA with absorbing states, and PPO.

Every loop alternates a rollout phase (one buffer of agent-steps) with an
update phase and appends one metrics row per update.  A non-finite loss
aborts the run with diagnostics instead of training on.
"""

from __future__ import annotations

import numpy as np

from ..config import ConfigError, RunConfig
from ..critic import BaselineNet, ValueNet
from ..envs import make_env, wrap_absorbing
from ..policy import ActorNet
from ..tensorcore import Adam, Mlp
from .batches import MapocaCritic, build_batches
from .metrics import MetricsRow, MetricsSeries
from .ppo import build_ppo_samples, ppo_update
from .rollout import RolloutWorker
from .updates import ComaCritic, ComaUpdater, MapocaUpdater, UpdateStats, ctde_update


class NumericalAbort(RuntimeError):
    """Training produced a non-finite loss; the run stops with diagnostics."""


def _rngs(seed: int) -> tuple[np.random.Generator, int, np.random.Generator]:
    init_seq, worker_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(3)
    worker_seed = int(np.random.default_rng(worker_seq).integers(0, 2**63 - 1))
    return np.random.default_rng(init_seq), worker_seed, np.random.default_rng(shuffle_seq)


def _check_finite(stats: UpdateStats, step: int) -> None:
    values = {
        "value_loss": stats.value_loss,
        "baseline_loss": stats.baseline_loss,
        "policy_loss": stats.policy_loss,
    }
    bad = {name: v for name, v in values.items() if not np.isfinite(v)}
    if bad:
        raise NumericalAbort(
            f"non-finite losses at env step {step}: "
            + ", ".join(f"{name}={value}" for name, value in bad.items())
        )


class _RowBuilder:
    """Carries episode statistics forward across update windows."""

    def __init__(self) -> None:
        self.steps = 0
        self.episodes = 0
        self.last_reward = 0.0
        self.last_length = 0.0

    def row(self, result, stats: UpdateStats) -> MetricsRow:
        self.steps += result.env_steps
        self.episodes += result.episodes
        if result.episode_rewards:
            self.last_reward = float(np.mean(result.episode_rewards))
            self.last_length = float(np.mean(result.episode_lengths))
        return MetricsRow(
            step=self.steps,
            episodes=self.episodes,
            mean_episode_reward=self.last_reward,
            mean_episode_length=self.last_length,
            value_loss=stats.value_loss,
            baseline_loss=stats.baseline_loss,
            policy_loss=stats.policy_loss,
            entropy=stats.entropy,
            mean_active_agents=result.agent_steps / result.env_steps,
        )


def train_mapoca(cfg: RunConfig) -> MetricsSeries:
    """Attention critic and baseline over active agents only."""
    init_rng, worker_seed, shuffle_rng = _rngs(cfg.seed)
    env = make_env(cfg.env, cfg.env_options)
    space = env.observation_space_id
    actors = {
        space: ActorNet(
            env.observation_dim, env.n_actions, cfg.hidden_units, cfg.fc_layers, init_rng
        )
    }
    value_net = ValueNet(
        {space: env.observation_dim},
        cfg.attention_embedding,
        cfg.attention_heads,
        cfg.hidden_units,
        cfg.fc_layers,
        init_rng,
        cfg.attention_layers,
    )
    baseline_net = BaselineNet(
        {space: (env.observation_dim, env.n_actions)},
        cfg.attention_embedding,
        cfg.attention_heads,
        cfg.hidden_units,
        cfg.fc_layers,
        init_rng,
        cfg.attention_layers,
    )
    optimizers = [
        Adam(value_net.parameters(), cfg.learning_rate),
        Adam(baseline_net.parameters(), cfg.learning_rate),
        Adam(actors[space].parameters(), cfg.learning_rate),
    ]
    critic = MapocaCritic(value_net, baseline_net, space)
    updater = MapocaUpdater(value_net, baseline_net, space)
    worker = RolloutWorker(env, actors, worker_seed)

    rows: list[MetricsRow] = []
    builder = _RowBuilder()
    while builder.steps < cfg.max_steps:
        result = worker.collect(cfg.buffer_size, cfg.max_steps - builder.steps)
        if result.env_steps == 0:
            break
        batch = build_batches(
            result.trajectories, critic, cfg.gamma, cfg.lam,
            cfg.normalize_advantages, space,
        )
        stats = ctde_update(
            batch, updater, actors, optimizers, cfg.epochs, cfg.minibatch_size,
            cfg.clip_epsilon, cfg.entropy_beta, shuffle_rng,
        )
        rows.append(builder.row(result, stats))
        _check_finite(stats, builder.steps)
    return MetricsSeries(rows=rows)


def train_coma(cfg: RunConfig) -> MetricsSeries:
    """Fully connected critic/baseline over a fixed-width absorbing view."""
    init_rng, worker_seed, shuffle_rng = _rngs(cfg.seed)
    env = make_env(cfg.env, cfg.env_options)
    space = env.observation_space_id
    n_max = cfg.n_max if cfg.n_max is not None else env.max_agents
    if n_max < env.max_agents:
        raise ConfigError(
            f"env.n_max={n_max} is below the environment's maximum population "
            f"{env.max_agents}"
        )
    wrapper = wrap_absorbing(env, n_max)
    actors = {
        space: ActorNet(
            env.observation_dim, env.n_actions, cfg.hidden_units, cfg.fc_layers, init_rng
        )
    }
    value_net = Mlp(
        n_max * env.observation_dim, [cfg.hidden_units] * cfg.fc_layers + [1], init_rng
    )
    baseline_net = Mlp(
        n_max * (env.observation_dim + env.n_actions),
        [cfg.hidden_units] * cfg.fc_layers + [1],
        init_rng,
    )
    optimizers = [
        Adam(value_net.parameters(), cfg.learning_rate),
        Adam(baseline_net.parameters(), cfg.learning_rate),
        Adam(actors[space].parameters(), cfg.learning_rate),
    ]
    updater = ComaUpdater(value_net, baseline_net, n_max, env.n_actions)
    critic = ComaCritic(updater)
    worker = RolloutWorker(env, actors, worker_seed, wrapper=wrapper)

    rows: list[MetricsRow] = []
    builder = _RowBuilder()
    while builder.steps < cfg.max_steps:
        result = worker.collect(cfg.buffer_size, cfg.max_steps - builder.steps)
        if result.env_steps == 0:
            break
        batch = build_batches(
            result.trajectories, critic, cfg.gamma, cfg.lam,
            cfg.normalize_advantages, space,
        )
        stats = ctde_update(
            batch, updater, actors, optimizers, cfg.epochs, cfg.minibatch_size,
            cfg.clip_epsilon, cfg.entropy_beta, shuffle_rng,
        )
        rows.append(builder.row(result, stats))
        _check_finite(stats, builder.steps)
    return MetricsSeries(rows=rows)


def train_ppo(cfg: RunConfig) -> MetricsSeries:
    """Independent per-agent actor-critic with GAE (the experimental control)."""
    init_rng, worker_seed, shuffle_rng = _rngs(cfg.seed)
    env = make_env(cfg.env, cfg.env_options)
    space = env.observation_space_id
    actors = {
        space: ActorNet(
            env.observation_dim, env.n_actions, cfg.hidden_units, cfg.fc_layers, init_rng
        )
    }
    value_nets = {
        space: Mlp(
            env.observation_dim, [cfg.hidden_units] * cfg.fc_layers + [1], init_rng
        )
    }
    optimizers = [
        Adam(value_nets[space].parameters(), cfg.learning_rate),
        Adam(actors[space].parameters(), cfg.learning_rate),
    ]
    worker = RolloutWorker(env, actors, worker_seed)

    rows: list[MetricsRow] = []
    builder = _RowBuilder()
    while builder.steps < cfg.max_steps:
        result = worker.collect(cfg.buffer_size, cfg.max_steps - builder.steps)
        if result.env_steps == 0:
            break
        samples = build_ppo_samples(
            result.trajectories, space, value_nets, cfg.gamma, cfg.lam,
            cfg.normalize_advantages,
        )
        stats = ppo_update(
            samples, actors, value_nets, optimizers, cfg.epochs,
            cfg.minibatch_size, cfg.clip_epsilon, cfg.entropy_beta, shuffle_rng,
        )
        rows.append(builder.row(result, stats))
        _check_finite(stats, builder.steps)
    return MetricsSeries(rows=rows)


TRAINERS = {"mapoca": train_mapoca, "coma": train_coma, "ppo": train_ppo}
