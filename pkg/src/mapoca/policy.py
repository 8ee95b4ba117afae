"""Independent per-agent actors with discrete categorical heads.

Actors act on local observations only.  Homogeneous agents (same
observation and action space) share one parameter set.  Training uses the
clipped surrogate objective with an entropy bonus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .tensorcore import Array, DiffNode

__all__ = ["ActionRecord", "ActorNet", "entropy", "policy_loss"]


@dataclass(frozen=True)
class ActionRecord:
    """A sampled action with its exact log-probability and the policy entropy."""

    action: int
    log_prob: float
    entropy: float


def _log_softmax(logits: Array) -> Array:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def entropy(logits: Array) -> float:
    """Shannon entropy (natural log) of the categorical softmax(logits)."""
    lp = _log_softmax(np.asarray(logits, dtype=np.float64))
    p = np.exp(lp)
    return float(-(p * lp).sum())


class ActorNet:
    """Categorical policy: dense encoder stack and a logit head."""

    def __init__(
        self,
        obs_dim: int,
        n_actions: int,
        hidden_units: int,
        fc_layers: int,
        rng: np.random.Generator,
    ):
        if n_actions < 2:
            raise ValueError("need at least two actions for a categorical policy")
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        self.net = tc.Mlp(obs_dim, [hidden_units] * fc_layers + [n_actions], rng)

    def logits_node(self, observations) -> DiffNode:
        obs = tc.as_node(observations)
        if obs.value.shape[-1] != self.obs_dim:
            raise ValueError(
                f"observation width {obs.value.shape[-1]} does not match the "
                f"actor's space width {self.obs_dim}"
            )
        return self.net(obs)

    def act_group(self, observations: Array, rng: np.random.Generator) -> list[ActionRecord]:
        """Sample one action per row of (k, obs_dim), in row order."""
        obs = np.asarray(observations, dtype=np.float64)
        if obs.ndim != 2:
            raise ValueError(f"expected (k, obs_dim) observations, got {obs.shape}")
        with tc.no_grad():
            logits = self.logits_node(obs).value
        lp = _log_softmax(logits)
        p = np.exp(lp)
        records = []
        for i in range(obs.shape[0]):
            cdf = np.cumsum(p[i])
            a = int(np.searchsorted(cdf, rng.random(), side="right"))
            a = min(a, self.n_actions - 1)
            records.append(
                ActionRecord(
                    action=a,
                    log_prob=float(lp[i, a]),
                    entropy=float(-(p[i] * lp[i]).sum()),
                )
            )
        return records

    def act(self, observation: Array, rng: np.random.Generator) -> ActionRecord:
        """Sample an action for a single local observation."""
        obs = np.asarray(observation, dtype=np.float64)
        if obs.ndim != 1:
            raise ValueError(f"expected a flat observation, got shape {obs.shape}")
        return self.act_group(obs.reshape(1, -1), rng)[0]

    def evaluate(
        self, observations: Array, actions: Array
    ) -> tuple[DiffNode, DiffNode]:
        """Differentiable log-probs and entropies for a batch of (obs, action)."""
        acts = np.asarray(actions, dtype=np.int64)
        logits = self.logits_node(np.asarray(observations, dtype=np.float64))
        lp = tc.log_softmax(logits)
        log_probs = tc.gather_last(lp, acts)
        entropies = tc.neg(tc.reduce_sum(tc.mul(tc.exp(lp), lp), axis=-1))
        return log_probs, entropies

    def parameters(self) -> list[DiffNode]:
        return self.net.parameters()


def policy_loss(
    new_log_probs: DiffNode,
    old_log_probs: Array,
    advantages: Array,
    clip_epsilon: float,
    entropy_coeff: float,
    entropies: DiffNode,
) -> DiffNode:
    """Clipped surrogate objective with an entropy bonus.

    loss = -mean(min(rho * A, clamp(rho, 1-eps, 1+eps) * A)) - beta * mean(H)
    with rho = exp(new - old).
    """
    old = np.asarray(old_log_probs, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    n = new_log_probs.value.shape[0]
    if old.shape[0] != n or adv.shape[0] != n or entropies.value.shape[0] != n:
        raise ValueError(
            f"mismatched batch lengths: log_probs {n}, old {old.shape[0]}, "
            f"advantages {adv.shape[0]}, entropies {entropies.value.shape[0]}"
        )
    ratio = tc.exp(tc.sub(new_log_probs, old))
    surrogate = tc.minimum(
        tc.mul(ratio, adv),
        tc.mul(tc.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon), adv),
    )
    return tc.sub(
        tc.neg(tc.reduce_mean(surrogate)),
        tc.mul(entropy_coeff, tc.reduce_mean(entropies)),
    )
