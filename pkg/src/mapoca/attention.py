"""Entity encoders and the residual self-attention (RSA) block.

The RSA block turns a variable-size set of per-entity embeddings into one
fixed-width vector: layer norm, multi-head scaled dot-product attention, a
residual connection back to the raw embeddings, a second layer norm, and a
mean pool over entities.  No positional encoding is used anywhere, so the
pooled output is invariant to entity order and the same parameters accept
any entity count.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .tensorcore import Array, DiffNode

__all__ = ["EntityEncoder", "RsaBlock", "EncoderBank", "one_hot"]


def one_hot(index: int, width: int) -> Array:
    v = np.zeros(width)
    v[index] = 1.0
    return v


class EntityEncoder:
    """Dense embedding shared by every entity drawn from one space.

    A stack of ``layers`` dense+ReLU layers of width ``embed_dim`` maps an
    observation (or observation-action concatenation) into embedding space.
    """

    def __init__(
        self,
        space_id: str,
        input_dim: int,
        embed_dim: int,
        rng: np.random.Generator,
        layers: int = 1,
    ):
        if layers < 1:
            raise ValueError("entity encoder needs at least one layer")
        self.space_id = space_id
        self.input_dim = input_dim
        self.embed_dim = embed_dim
        self._layers = [
            tc.Dense(input_dim if i == 0 else embed_dim, embed_dim, rng)
            for i in range(layers)
        ]

    def encode(self, x) -> DiffNode:
        h = tc.as_node(x)
        if h.value.shape[-1] != self.input_dim:
            raise ValueError(
                f"encoder '{self.space_id}' expects width {self.input_dim}, "
                f"got {h.value.shape[-1]}"
            )
        for layer in self._layers:
            h = tc.relu(layer(h))
        return h

    def parameters(self) -> list[DiffNode]:
        return [p for layer in self._layers for p in layer.parameters()]


class RsaBlock:
    """Residual self-attention over an entity set, pooled to a fixed vector.

    Forward pipeline for entities ``x`` of shape (..., k, d):
    layer norm -> per-head Q/K/V projections -> scaled dot-product attention
    (scale 1/sqrt(d / n_heads)) -> head concatenation and output projection
    -> residual add with the pre-norm ``x`` -> layer norm -> mean pool over
    the k entities.
    """

    def __init__(self, embed_dim: int, n_heads: int, rng: np.random.Generator):
        if embed_dim % n_heads != 0:
            raise ValueError(
                f"embed_dim {embed_dim} is not divisible by n_heads {n_heads}"
            )
        self.embed_dim = embed_dim
        self.n_heads = n_heads
        self.head_dim = embed_dim // n_heads
        self.query = tc.Dense(embed_dim, embed_dim, rng)
        self.key = tc.Dense(embed_dim, embed_dim, rng)
        self.value = tc.Dense(embed_dim, embed_dim, rng)
        self.out = tc.Dense(embed_dim, embed_dim, rng)
        ones = np.ones((1, embed_dim))
        zeros = np.zeros((1, embed_dim))
        self.norm_in_gain = DiffNode(ones.copy(), track=True)
        self.norm_in_shift = DiffNode(zeros.copy(), track=True)
        self.norm_out_gain = DiffNode(ones.copy(), track=True)
        self.norm_out_shift = DiffNode(zeros.copy(), track=True)

    def _split_heads(self, x: DiffNode, lead: tuple[int, ...], k: int) -> DiffNode:
        # (..., k, d) -> (..., H, k, d_head)
        x = tc.reshape(x, lead + (k, self.n_heads, self.head_dim))
        return tc.swap_axes(x, -2, -3)

    def _attend(self, entities) -> tuple[DiffNode, DiffNode]:
        x = tc.as_node(entities)
        if x.value.ndim < 2:
            raise ValueError("entities must have shape (..., k, embed_dim)")
        if x.value.shape[-1] != self.embed_dim:
            raise ValueError(
                f"entity width {x.value.shape[-1]} does not match embed_dim "
                f"{self.embed_dim}"
            )
        k = x.value.shape[-2]
        if k < 1:
            raise ValueError("attention over an empty entity set is undefined")
        lead = x.value.shape[:-2]

        normed = tc.layer_norm(x, self.norm_in_gain, self.norm_in_shift)
        q = self._split_heads(self.query(normed), lead, k)
        key = self._split_heads(self.key(normed), lead, k)
        v = self._split_heads(self.value(normed), lead, k)

        scale = 1.0 / math.sqrt(self.head_dim)
        logits = tc.mul(tc.matmul(q, tc.swap_axes(key, -1, -2)), scale)
        weights = tc.softmax(logits)  # (..., H, k, k)

        mixed = tc.matmul(weights, v)  # (..., H, k, d_head)
        mixed = tc.swap_axes(mixed, -2, -3)
        mixed = tc.reshape(mixed, lead + (k, self.embed_dim))
        projected = self.out(mixed)

        residual = tc.add(projected, x)
        out = tc.layer_norm(residual, self.norm_out_gain, self.norm_out_shift)
        pooled = tc.reduce_mean(out, axis=-2)
        return pooled, weights

    def forward(self, entities) -> DiffNode:
        """Pool an entity set (..., k, d) into a fixed (..., d) embedding."""
        pooled, _ = self._attend(entities)
        return pooled

    def attention_weights(self, entities: Array) -> Array:
        """Row-stochastic attention matrices, shape (..., n_heads, k, k).

        Exposed for tests and diagnostics only.
        """
        with tc.no_grad():
            _, weights = self._attend(np.asarray(entities, dtype=np.float64))
        return weights.value

    def parameters(self) -> list[DiffNode]:
        return (
            self.query.parameters()
            + self.key.parameters()
            + self.value.parameters()
            + self.out.parameters()
            + [
                self.norm_in_gain,
                self.norm_in_shift,
                self.norm_out_gain,
                self.norm_out_shift,
            ]
        )


class EncoderBank:
    """Observation and observation-action encoders keyed by space id.

    Agents whose observations come from the same space share one encoder
    instance; observation entities and observation-action entities use
    distinct encoders even for the same space.  Discrete actions are
    one-hot encoded and concatenated to the observation before embedding.
    """

    def __init__(self, embed_dim: int, rng: np.random.Generator, layers: int = 1):
        self.embed_dim = embed_dim
        self._rng = rng
        self._layers = layers
        self._obs_encoders: dict[str, EntityEncoder] = {}
        self._obs_action_encoders: dict[str, EntityEncoder] = {}
        self._action_widths: dict[str, int] = {}

    def add_observation_space(self, space_id: str, obs_dim: int) -> None:
        if space_id not in self._obs_encoders:
            self._obs_encoders[space_id] = EntityEncoder(
                space_id, obs_dim, self.embed_dim, self._rng, self._layers
            )

    def add_observation_action_space(
        self, space_id: str, obs_dim: int, n_actions: int
    ) -> None:
        if space_id not in self._obs_action_encoders:
            self._obs_action_encoders[space_id] = EntityEncoder(
                space_id, obs_dim + n_actions, self.embed_dim, self._rng, self._layers
            )
            self._action_widths[space_id] = n_actions

    def observation_encoder(self, space_id: str) -> EntityEncoder:
        try:
            return self._obs_encoders[space_id]
        except KeyError:
            raise ValueError(f"no observation encoder registered for space '{space_id}'")

    def observation_action_encoder(self, space_id: str) -> EntityEncoder:
        try:
            return self._obs_action_encoders[space_id]
        except KeyError:
            raise ValueError(
                f"no observation-action encoder registered for space '{space_id}'"
            )

    def action_width(self, space_id: str) -> int:
        return self._action_widths[space_id]

    def encode_entities(
        self,
        observations: Sequence[tuple[str, Array]],
        actions: Sequence[int] | None = None,
    ) -> DiffNode:
        """Encode entities into a (k, embed_dim) set, preserving order.

        With ``actions`` given, entity i is embedded by the
        observation-action encoder of its space from the concatenation of
        its observation and the one-hot of its action.
        """
        if len(observations) < 1:
            raise ValueError("encode_entities requires at least one entity")
        if actions is not None and len(actions) != len(observations):
            raise ValueError(
                f"got {len(actions)} actions for {len(observations)} observations"
            )
        rows = []
        for i, (space_id, obs) in enumerate(observations):
            vec = np.asarray(obs, dtype=np.float64)
            if actions is None:
                encoder = self.observation_encoder(space_id)
                rows.append(encoder.encode(vec.reshape(1, -1)))
            else:
                encoder = self.observation_action_encoder(space_id)
                joint = np.concatenate(
                    [vec, one_hot(int(actions[i]), self.action_width(space_id))]
                )
                rows.append(encoder.encode(joint.reshape(1, -1)))
        if len(rows) == 1:
            return rows[0]
        return tc.concat(rows, axis=0)

    def parameters(self) -> list[DiffNode]:
        params: list[DiffNode] = []
        for enc in self._obs_encoders.values():
            params.extend(enc.parameters())
        for enc in self._obs_action_encoders.values():
            params.extend(enc.parameters())
        return params
