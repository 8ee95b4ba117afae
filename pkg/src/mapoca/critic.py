"""Centralized value function, counterfactual baseline, and TD(lambda) targets.

The value network scores the joint state through the observations of the
currently active agents only; terminated agents are simply absent from its
input.  The baseline network scores the same state for one focus agent j
from j's observation plus the observation-action pairs of everyone else,
which marginalizes j's own action out of the estimate.  Both networks pool
their variable-size entity sets through their own RSA blocks and share no
parameters with each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import tensorcore as tc
from .attention import EncoderBank, RsaBlock, one_hot
from .tensorcore import Array, DiffNode

__all__ = [
    "EntityObs",
    "EntityObsAction",
    "ValueNet",
    "BaselineNet",
    "LambdaTargets",
    "compute_lambda_targets",
    "advantages",
    "clipped_value_loss",
    "critic_losses",
]


@dataclass(frozen=True)
class EntityObs:
    """One agent's observation tagged with its id and observation space."""

    agent_id: int
    space_id: str
    observation: Array


@dataclass(frozen=True)
class EntityObsAction:
    """One agent's observation-action pair for baseline conditioning."""

    agent_id: int
    space_id: str
    observation: Array
    action: int


class ValueNet:
    """Centralized state value over the active agents' observations."""

    def __init__(
        self,
        spaces: Mapping[str, int],
        embed_dim: int,
        n_heads: int,
        hidden_units: int,
        fc_layers: int,
        rng: np.random.Generator,
        embed_layers: int = 1,
    ):
        self.bank = EncoderBank(embed_dim, rng, embed_layers)
        for space_id, obs_dim in spaces.items():
            self.bank.add_observation_space(space_id, obs_dim)
        self.rsa = RsaBlock(embed_dim, n_heads, rng)
        self.head = tc.Mlp(embed_dim, [hidden_units] * fc_layers + [1], rng)

    def value_node(self, entities: Sequence[EntityObs]) -> DiffNode:
        if len(entities) < 1:
            raise ValueError("value estimate over an empty group is undefined")
        encoded = self.bank.encode_entities(
            [(e.space_id, e.observation) for e in entities]
        )
        pooled = self.rsa.forward(encoded)
        return tc.reshape(self.head(tc.reshape(pooled, (1, -1))), ())

    def value_estimate(self, entities: Sequence[EntityObs]) -> float:
        with tc.no_grad():
            return float(self.value_node(entities).value)

    def value_nodes(self, space_id: str, observations: Array) -> DiffNode:
        """Batched values for a homogeneous group: (B, k, obs_dim) -> (B,)."""
        obs = np.asarray(observations, dtype=np.float64)
        if obs.ndim != 3 or obs.shape[1] < 1:
            raise ValueError(f"expected (B, k, obs_dim) with k >= 1, got {obs.shape}")
        encoder = self.bank.observation_encoder(space_id)
        pooled = self.rsa.forward(encoder.encode(obs))
        return tc.reshape(self.head(pooled), (obs.shape[0],))

    def batch_values(self, space_id: str, observations: Array) -> Array:
        with tc.no_grad():
            return self.value_nodes(space_id, observations).value

    def parameters(self) -> list[DiffNode]:
        return self.bank.parameters() + self.rsa.parameters() + self.head.parameters()


class BaselineNet:
    """Per-agent counterfactual baseline with its own encoders and RSA block.

    Entity set for focus agent j: one observation-only entity for j plus
    one observation-action entity for every other active agent.  With j
    alone the set degenerates to the single observation entity.
    """

    def __init__(
        self,
        spaces: Mapping[str, tuple[int, int]],
        embed_dim: int,
        n_heads: int,
        hidden_units: int,
        fc_layers: int,
        rng: np.random.Generator,
        embed_layers: int = 1,
    ):
        self.bank = EncoderBank(embed_dim, rng, embed_layers)
        for space_id, (obs_dim, n_actions) in spaces.items():
            self.bank.add_observation_space(space_id, obs_dim)
            self.bank.add_observation_action_space(space_id, obs_dim, n_actions)
        self.rsa = RsaBlock(embed_dim, n_heads, rng)
        self.head = tc.Mlp(embed_dim, [hidden_units] * fc_layers + [1], rng)

    def baseline_node(
        self, agent_j: EntityObs, others: Sequence[EntityObsAction]
    ) -> DiffNode:
        for other in others:
            if other.agent_id == agent_j.agent_id:
                raise ValueError(
                    f"agent {agent_j.agent_id} appears in its own baseline's "
                    "others set"
                )
        rows = [
            self.bank.observation_encoder(agent_j.space_id).encode(
                np.asarray(agent_j.observation, dtype=np.float64).reshape(1, -1)
            )
        ]
        for other in others:
            joint = np.concatenate(
                [
                    np.asarray(other.observation, dtype=np.float64),
                    one_hot(other.action, self.bank.action_width(other.space_id)),
                ]
            )
            rows.append(
                self.bank.observation_action_encoder(other.space_id).encode(
                    joint.reshape(1, -1)
                )
            )
        entities = rows[0] if len(rows) == 1 else tc.concat(rows, axis=0)
        pooled = self.rsa.forward(entities)
        return tc.reshape(self.head(tc.reshape(pooled, (1, -1))), ())

    def baseline_estimate(
        self, agent_j: EntityObs, others: Sequence[EntityObsAction]
    ) -> float:
        with tc.no_grad():
            return float(self.baseline_node(agent_j, others).value)

    def baseline_nodes(
        self,
        space_id: str,
        focus_obs: Array,
        others_obs: Array,
        others_actions: Array,
    ) -> DiffNode:
        """Batched baselines for a homogeneous group.

        focus_obs: (B, obs_dim); others_obs: (B, k-1, obs_dim);
        others_actions: (B, k-1) ints.  k-1 may be 0.  Returns (B,).
        """
        focus = np.asarray(focus_obs, dtype=np.float64)
        if focus.ndim != 2:
            raise ValueError(f"expected focus_obs (B, obs_dim), got {focus.shape}")
        batch = focus.shape[0]
        focus_row = self.bank.observation_encoder(space_id).encode(
            focus.reshape(batch, 1, -1)
        )
        others = np.asarray(others_obs, dtype=np.float64)
        if others.ndim != 3 or others.shape[0] != batch:
            raise ValueError(
                f"expected others_obs (B, k-1, obs_dim), got {others.shape}"
            )
        if others.shape[1] == 0:
            entities = focus_row
        else:
            n_actions = self.bank.action_width(space_id)
            acts = np.asarray(others_actions, dtype=np.int64)
            onehots = np.eye(n_actions)[acts]
            joint = np.concatenate([others, onehots], axis=-1)
            other_rows = self.bank.observation_action_encoder(space_id).encode(joint)
            entities = tc.concat([focus_row, other_rows], axis=1)
        pooled = self.rsa.forward(entities)
        return tc.reshape(self.head(pooled), (batch,))

    def batch_baselines(
        self,
        space_id: str,
        focus_obs: Array,
        others_obs: Array,
        others_actions: Array,
    ) -> Array:
        with tc.no_grad():
            return self.baseline_nodes(
                space_id, focus_obs, others_obs, others_actions
            ).value

    def parameters(self) -> list[DiffNode]:
        return self.bank.parameters() + self.rsa.parameters() + self.head.parameters()


@dataclass(frozen=True)
class LambdaTargets:
    """Per-timestep y(lambda) regression targets for one segment."""

    y: Array
    gamma: float
    lam: float


def compute_lambda_targets(
    rewards: Array,
    bootstrap_values: Array,
    done: bool,
    gamma: float,
    lam: float,
) -> LambdaTargets:
    """TD(lambda) targets by backward recursion over a finite segment.

    ``rewards[t]`` is the reward that followed the actions at step t and
    ``bootstrap_values[t]`` is the critic's value of the state reached
    after step t.  The final bootstrap is zeroed when ``done`` marks the
    segment as terminal:

        y[T-1] = r[T-1] + gamma * V[T-1] * (1 - done)
        y[t]   = r[t] + gamma * ((1 - lam) * V[t] + lam * y[t+1])

    which equals the forward weighted sum of n-step returns on finite
    segments.  lam=0 reduces to one-step TD; lam=1 on a terminal segment
    gives the discounted Monte Carlo return.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(bootstrap_values, dtype=np.float64)
    if r.shape != v.shape or r.ndim != 1:
        raise ValueError(
            f"rewards shape {r.shape} and bootstrap values shape {v.shape} "
            "must be equal 1-D arrays"
        )
    horizon = r.shape[0]
    y = np.empty(horizon)
    last_value = 0.0 if done else v[-1]
    y[-1] = r[-1] + gamma * last_value
    for t in range(horizon - 2, -1, -1):
        y[t] = r[t] + gamma * ((1.0 - lam) * v[t] + lam * y[t + 1])
    return LambdaTargets(y=y, gamma=gamma, lam=lam)


def advantages(target: float, baselines: Array) -> Array:
    """Per-agent advantages y - b_j for the agents active at one timestep."""
    return float(target) - np.asarray(baselines, dtype=np.float64)


def clipped_value_loss(
    prediction: DiffNode,
    target: Array,
    old_prediction: Array,
    clip_epsilon: float,
) -> DiffNode:
    """Elementwise max of clipped and unclipped squared errors against y.

    The clipped branch clamps the prediction to old +- epsilon before the
    square, so a prediction that has moved outside the trust region toward
    the target trains through the clamped (constant) branch only.
    """
    target = np.asarray(target, dtype=np.float64)
    old = np.asarray(old_prediction, dtype=np.float64)
    plain = tc.square(tc.sub(prediction, target))
    clamped = tc.clip(prediction, old - clip_epsilon, old + clip_epsilon)
    clipped = tc.square(tc.sub(clamped, target))
    return tc.maximum(plain, clipped)


def critic_losses(
    value_predictions: DiffNode,
    value_targets: Array,
    value_olds: Array,
    baseline_predictions: DiffNode,
    baseline_targets: Array,
    baseline_olds: Array,
    clip_epsilon: float,
) -> tuple[DiffNode, DiffNode]:
    """Mean clipped squared-error losses for the value and baseline batches."""
    value_loss = tc.reduce_mean(
        clipped_value_loss(value_predictions, value_targets, value_olds, clip_epsilon)
    )
    baseline_loss = tc.reduce_mean(
        clipped_value_loss(
            baseline_predictions, baseline_targets, baseline_olds, clip_epsilon
        )
    )
    return value_loss, baseline_loss
