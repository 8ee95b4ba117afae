"""RSA block and entity encoder behavior."""

import numpy as np
import pytest

import mapoca.tensorcore as tc
from mapoca.attention import EncoderBank, EntityEncoder, RsaBlock

from oracles import max_grad_rel_error, reference_rsa


def identity_block() -> RsaBlock:
    """d_e=2, one head, identity projections, zero biases."""
    block = RsaBlock(2, 1, np.random.default_rng(0))
    for layer in (block.query, block.key, block.value, block.out):
        layer.weight.value = np.eye(2)
        layer.bias.value = np.zeros((1, 2))
    return block


class TestRsaForward:
    def test_single_entity_weights_and_output(self):
        rng = np.random.default_rng(1)
        block = RsaBlock(8, 2, rng)
        entities = rng.normal(size=(1, 8))
        weights = block.attention_weights(entities)
        assert weights.shape == (2, 1, 1)
        assert np.allclose(weights, 1.0)
        out = block.forward(entities)
        assert out.value.shape == (8,)
        assert np.allclose(out.value, reference_rsa(entities, block), atol=1e-12)

    def test_permutation_invariance_up_to_ten_entities(self):
        rng = np.random.default_rng(2)
        block = RsaBlock(16, 4, rng)
        for k in range(1, 11):
            entities = rng.normal(size=(k, 16))
            base = block.forward(entities).value
            for _ in range(4):
                perm = rng.permutation(k)
                shuffled = block.forward(entities[perm]).value
                assert np.max(np.abs(base - shuffled)) < 1e-9

    def test_hand_computed_identity_case(self):
        # frozen from the plain-numpy oracle: scaled dot-product logits
        # +-(2 * a^2) / sqrt(2) with a = 0.5 / sqrt(0.25 + 1e-5)
        block = identity_block()
        entities = np.array([[1.0, 0.0], [0.0, 1.0]])
        weights = block.attention_weights(entities)[0]
        assert np.allclose(
            weights,
            [[0.94418682, 0.05581318], [0.05581318, 0.94418682]],
            atol=1e-8,
        )
        pooled = block.forward(entities).value
        assert np.allclose(pooled, [0.0, 0.0], atol=1e-12)
        assert np.allclose(pooled, reference_rsa(entities, block), atol=1e-12)

    def test_matches_reference_on_random_blocks(self):
        rng = np.random.default_rng(3)
        for k in (1, 2, 5):
            block = RsaBlock(12, 3, rng)
            entities = rng.normal(size=(k, 12))
            assert np.allclose(
                block.forward(entities).value,
                reference_rsa(entities, block),
                atol=1e-12,
            )

    def test_same_parameters_accept_any_entity_count(self):
        rng = np.random.default_rng(4)
        block = RsaBlock(8, 2, rng)
        for k in range(1, 9):
            assert block.forward(rng.normal(size=(k, 8))).value.shape == (8,)

    def test_batched_forward_equals_per_sample(self):
        rng = np.random.default_rng(5)
        block = RsaBlock(8, 2, rng)
        batch = rng.normal(size=(6, 3, 8))
        stacked = block.forward(batch).value
        for i in range(6):
            assert np.allclose(stacked[i], block.forward(batch[i]).value, atol=1e-12)

    def test_empty_set_rejected(self):
        block = RsaBlock(4, 1, np.random.default_rng(6))
        with pytest.raises(ValueError, match="empty"):
            block.forward(np.zeros((0, 4)))

    def test_head_count_must_divide_width(self):
        with pytest.raises(ValueError, match="divisible"):
            RsaBlock(10, 3, np.random.default_rng(0))


class TestAttentionWeights:
    def test_identical_entities_attend_uniformly(self):
        rng = np.random.default_rng(7)
        block = RsaBlock(8, 2, rng)
        entities = np.repeat(rng.normal(size=(1, 8)), 4, axis=0)
        weights = block.attention_weights(entities)
        assert np.allclose(weights, 0.25, atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(8)
        block = RsaBlock(12, 4, rng)
        weights = block.attention_weights(rng.normal(size=(3, 12)))
        assert weights.shape == (4, 3, 3)
        assert np.allclose(weights.sum(axis=-1), 1.0, atol=1e-9)


class TestGradientFlow:
    def test_every_entity_receives_gradient(self):
        rng = np.random.default_rng(9)
        block = RsaBlock(8, 2, rng)
        entities = tc.DiffNode(rng.normal(size=(5, 8)), track=True)
        tc.backward(tc.reduce_sum(block.forward(entities)))
        per_entity = np.abs(entities.grad).sum(axis=1)
        assert np.all(per_entity > 0)

    def test_block_gradients_match_finite_differences(self):
        rng = np.random.default_rng(10)
        block = RsaBlock(8, 2, rng)
        data = rng.normal(size=(4, 8))

        def build():
            return tc.reduce_sum(tc.square(block.forward(data)))

        err = max_grad_rel_error(build, block.parameters(), rng, n_probes=60)
        assert err < 1e-4


class TestEncoders:
    def test_shared_encoder_is_deterministic_across_agents(self):
        rng = np.random.default_rng(11)
        bank = EncoderBank(8, rng)
        bank.add_observation_space("grid", 5)
        obs = rng.normal(size=5)
        entities = bank.encode_entities([("grid", obs), ("grid", obs.copy())])
        assert np.allclose(entities.value[0], entities.value[1])

    def test_single_entity_set(self):
        rng = np.random.default_rng(12)
        bank = EncoderBank(8, rng)
        bank.add_observation_space("grid", 5)
        entities = bank.encode_entities([("grid", rng.normal(size=5))])
        assert entities.value.shape == (1, 8)

    def test_observation_and_observation_action_encoders_differ(self):
        rng = np.random.default_rng(13)
        bank = EncoderBank(8, rng)
        bank.add_observation_space("grid", 5)
        bank.add_observation_action_space("grid", 5, 3)
        obs = rng.normal(size=5)
        plain = bank.encode_entities([("grid", obs)])
        with_action = bank.encode_entities([("grid", obs)], actions=[1])
        assert not np.allclose(plain.value, with_action.value)

    def test_distinct_spaces_get_distinct_encoders(self):
        rng = np.random.default_rng(14)
        bank = EncoderBank(8, rng)
        bank.add_observation_space("a", 4)
        bank.add_observation_space("b", 4)
        assert bank.observation_encoder("a") is not bank.observation_encoder("b")
        assert bank.observation_encoder("a") is bank.observation_encoder("a")

    def test_unregistered_space_rejected(self):
        bank = EncoderBank(8, np.random.default_rng(15))
        with pytest.raises(ValueError, match="no observation encoder"):
            bank.encode_entities([("missing", np.zeros(3))])

    def test_encoder_rejects_wrong_width(self):
        encoder = EntityEncoder("grid", 5, 8, np.random.default_rng(16))
        with pytest.raises(ValueError, match="width"):
            encoder.encode(np.zeros((1, 4)))
