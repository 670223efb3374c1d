import numpy as np
import pytest

from subquant.calib import (
    CalibStats,
    ProjectionGroup,
    accumulate_activations,
    attach_weights,
    fuse_weight_covariance,
    kv_key_stats,
    kv_value_stats,
    merge,
)
from subquant.errors import DimensionMismatchError
from subquant.linalg import gram_input, gram_weight


def group(dim, kind="attn-input"):
    return ProjectionGroup(kind=kind, dim=dim, name="g")


class TestAccumulate:
    def test_identity_batch(self):
        stats = accumulate_activations(CalibStats.empty(group(2)), np.eye(2))
        assert np.array_equal(stats.sigma_x, np.eye(2))
        assert stats.tokens_seen == 2
        assert stats.energy_x == 2.0

    def test_additivity(self):
        s0 = CalibStats.empty(group(2))
        two = accumulate_activations(
            accumulate_activations(s0, np.array([[1.0, 0.0]])),
            np.array([[0.0, 1.0]]))
        one = accumulate_activations(s0, np.eye(2))
        assert np.array_equal(two.sigma_x, one.sigma_x)
        assert two.tokens_seen == one.tokens_seen

    def test_order_invariance(self):
        rng = np.random.default_rng(0)
        batches = [rng.standard_normal((4, 3)) for _ in range(3)]
        concat = accumulate_activations(CalibStats.empty(group(3)),
                                        np.vstack(batches))
        for perm in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
            s = CalibStats.empty(group(3))
            for i in perm:
                s = accumulate_activations(s, batches[i])
            assert np.allclose(s.sigma_x, concat.sigma_x, rtol=1e-12)
            assert s.energy_x == pytest.approx(concat.energy_x, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            accumulate_activations(CalibStats.empty(group(3)), np.eye(2))

    def test_trace_energy_invariant(self):
        rng = np.random.default_rng(5)
        s = CalibStats.empty(group(6))
        for _ in range(4):
            s = accumulate_activations(s, rng.standard_normal((10, 6)))
        assert np.trace(s.sigma_x) == pytest.approx(s.energy_x, rel=1e-6)
        assert np.max(np.abs(s.sigma_x - s.sigma_x.T)) <= \
            1e-9 * np.max(np.abs(s.sigma_x))


class TestFuse:
    def test_two_identities(self):
        sigma, energy = fuse_weight_covariance([np.eye(2), np.eye(2)])
        assert np.array_equal(sigma, 2 * np.eye(2))
        assert energy == 4.0

    def test_single_member_is_gram(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal((4, 3))
        sigma, energy = fuse_weight_covariance([w])
        assert np.array_equal(sigma, gram_weight(w))
        assert energy == pytest.approx(np.sum(w**2))

    def test_three_members_sum_oracle(self):
        rng = np.random.default_rng(2)
        ws = [rng.standard_normal((4, 3)) for _ in range(3)]
        sigma, energy = fuse_weight_covariance(ws)
        expected = sum(w @ w.T for w in ws)
        assert np.allclose(sigma, expected, rtol=1e-12)
        assert energy == pytest.approx(sum(np.sum(w**2) for w in ws), rel=1e-12)
        assert np.trace(sigma) == pytest.approx(energy, rel=1e-6)

    def test_empty_and_mismatched(self):
        with pytest.raises(DimensionMismatchError):
            fuse_weight_covariance([])
        with pytest.raises(DimensionMismatchError):
            fuse_weight_covariance([np.eye(2), np.eye(3)])

    def test_attach_weights(self):
        s = CalibStats.empty(group(2))
        s = attach_weights(s, [np.eye(2)])
        assert np.array_equal(s.sigma_w, np.eye(2))
        assert s.energy_w == 2.0


class TestMerge:
    def test_associativity(self):
        rng = np.random.default_rng(3)
        shard = lambda seed: accumulate_activations(
            CalibStats.empty(group(4)),
            np.random.default_rng(seed).standard_normal((5, 4)))
        s, a, b = shard(0), shard(1), shard(2)
        ab = merge(merge(s, a), b)
        ba = merge(merge(s, b), a)
        assert np.allclose(ab.sigma_x, ba.sigma_x, rtol=1e-12)
        assert ab.energy_x == pytest.approx(ba.energy_x, rel=1e-12)
        assert ab.tokens_seen == ba.tokens_seen


class TestKvStats:
    def test_value_identity(self):
        s = kv_value_stats(np.eye(4), np.eye(4))
        assert np.array_equal(s.sigma_x, np.eye(4))
        assert np.array_equal(s.sigma_w, np.eye(4))
        assert s.group.kind == "kv-value"

    def test_value_zero_tokens(self):
        s = kv_value_stats(np.zeros((3, 4)), np.eye(4))
        assert np.array_equal(s.sigma_x, np.zeros((4, 4)))

    def test_value_gram_oracle(self):
        rng = np.random.default_rng(4)
        v = rng.standard_normal((16, 8))
        wo = rng.standard_normal((8, 8))
        s = kv_value_stats(v, wo, head_index=2)
        assert np.array_equal(s.sigma_x, gram_input(v))
        assert np.array_equal(s.sigma_w, gram_weight(wo))
        assert s.energy_x == pytest.approx(np.sum(v**2))
        assert s.group.head_index == 2

    def test_key_identity(self):
        s = kv_key_stats(np.eye(4), np.eye(4))
        assert np.array_equal(s.sigma_x, np.eye(4))
        assert np.array_equal(s.sigma_w, np.eye(4))
        assert s.group.kind == "kv-key"

    def test_key_zero_queries(self):
        s = kv_key_stats(np.eye(4), np.zeros((2, 4)))
        assert np.array_equal(s.sigma_w, np.zeros((4, 4)))

    def test_key_gram_oracle(self):
        rng = np.random.default_rng(6)
        k = rng.standard_normal((12, 8))
        q = rng.standard_normal((20, 8))
        s = kv_key_stats(k, q)
        assert np.array_equal(s.sigma_x, gram_input(k))
        assert np.array_equal(s.sigma_w, gram_input(q))
        assert s.energy_w == pytest.approx(np.sum(q**2))

    def test_key_head_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            kv_key_stats(np.zeros((2, 4)), np.zeros((2, 5)))


def test_group_member_shapes_must_share_dim():
    with pytest.raises(DimensionMismatchError):
        ProjectionGroup(kind="attn-input", dim=4, member_shapes=((5, 2),))
