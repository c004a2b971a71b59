"""
Tests for the bag fusion rules
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import expit

from src.mil import (
    PROB_EPS,
    AttentionParams,
    attention_weights,
    bag_logit_embedded,
    bag_prob_embedded,
    clamp_probs,
    instance_probs,
    literal_smil,
    logit,
    max_pool,
    mean_pool,
    noisy_or,
    instance_logits,
    smil,
    smil_from_logits,
    smil_logit,
    uniform_weights,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class TestExamples:
    def test_mean_pool(self):
        assert mean_pool([0.2, 0.4, 0.6]) == pytest.approx(0.4)
        assert mean_pool([0.1, 0.1, 0.9]) == pytest.approx(1.1 / 3)

    def test_max_pool(self):
        assert max_pool([0.2, 0.4, 0.6]) == pytest.approx(0.6)
        assert max_pool([0.1, 0.1, 0.9]) == pytest.approx(0.9)

    def test_noisy_or(self):
        assert noisy_or([0.5, 0.5]) == pytest.approx(0.75)
        expected = 1.0 - 0.9999 * 1e-4 * 0.49
        assert noisy_or([1e-4, 1.0 - 1e-4, 0.3, 0.3]) == pytest.approx(expected, rel=1e-12)

    def test_smil_unit_exponents(self):
        for m in (1, 2, 7, 50):
            assert smil(np.full(m, 0.5)) == pytest.approx(0.5)
        # one confident instance cannot outvote two doubtful ones
        assert smil([0.1, 0.1, 0.9]) == pytest.approx(0.1, rel=1e-12)

    def test_smil_zero_exponents_drop_instances(self):
        assert smil([0.3, 0.8, 0.9], [1.0, 0.0, 0.0]) == pytest.approx(0.3, rel=1e-12)

    def test_attention_weights(self):
        params = AttentionParams(w=[np.log(3.0)], W=[1.0])
        assert_allclose(attention_weights([[1.0], [0.0]], params), [0.75, 0.25], rtol=1e-12)
        assert_allclose(attention_weights([[2.0]], params), [1.0])

    def test_attention_weights_identical_rows(self, rng):
        params = AttentionParams(w=rng.standard_normal(4), W=rng.standard_normal(4))
        H = np.tile(rng.standard_normal(4), (6, 1))
        assert_allclose(attention_weights(H, params), uniform_weights(6), rtol=1e-12)

    def test_attention_weights_large_scores(self):
        params = AttentionParams(w=[1000.0], W=[0.0])
        alpha = attention_weights([[1.0], [0.0], [1.0]], params)
        assert_allclose(alpha, [0.5, 0.0, 0.5], atol=1e-300)

    def test_bag_prob_embedded_examples(self, rng):
        H = rng.standard_normal((5, 3))
        zero = AttentionParams(w=np.ones(3), W=np.zeros(3))
        assert bag_prob_embedded(H, zero, uniform_weights(5)) == pytest.approx(0.5)

        same = np.tile([1.0, 2.0, -1.0], (4, 1))
        params = AttentionParams(w=np.zeros(3), W=[0.5, 0.25, 1.0])
        c = float(same[0] @ params.W)
        assert bag_prob_embedded(same, params, uniform_weights(4)) == pytest.approx(expit(c), rel=1e-12)


class TestIdentityAtSingleInstance:
    @pytest.mark.parametrize("p", [1e-6, 0.2, 0.5, 0.93, 1.0 - 1e-6])
    def test_all_rules_return_p(self, p):
        for rule in (mean_pool, max_pool, noisy_or, smil):
            assert rule([p]) == pytest.approx(p, rel=1e-10)


class TestProperties:
    def test_permutation_invariance_is_exact(self, rng):
        p = rng.uniform(0.01, 0.99, size=9)
        alpha = rng.uniform(0.0, 2.0, size=9)
        perm = rng.permutation(9)
        assert mean_pool(p) == mean_pool(p[perm])
        assert max_pool(p) == max_pool(p[perm])
        assert noisy_or(p) == noisy_or(p[perm])
        assert smil(p) == smil(p[perm])
        assert smil(p, alpha) == smil(p[perm], alpha[perm])

    def test_embedded_permutation_invariance_is_exact(self, rng):
        H = rng.standard_normal((7, 4))
        params = AttentionParams(w=rng.standard_normal(4), W=rng.standard_normal(4), b=0.3)
        perm = rng.permutation(7)
        alpha = attention_weights(H, params)
        assert bag_logit_embedded(H, params, alpha) == bag_logit_embedded(H[perm], params, alpha[perm])

    def test_max_pool_below_noisy_or(self, rng):
        P = rng.uniform(0.0, 1.0, size=(10_000, 6))
        assert (max_pool(P) <= noisy_or(P)).all()

    def test_logit_identity(self, rng):
        z = rng.uniform(-2.0, 2.0, size=(200, 5))
        alpha = rng.uniform(0.0, 1.0, size=(200, 5))
        p = expit(z)
        assert_allclose(logit(smil(p, alpha)), (alpha * logit(p)).sum(axis=-1), atol=1e-10)

    def test_smil_logit_recovers_instance_logits(self, rng):
        z = rng.uniform(-10.0, 10.0, size=(500, 5))
        alpha = rng.uniform(0.0, 1.0, size=(500, 5))
        assert_allclose(smil_logit(expit(z), alpha), (alpha * z).sum(axis=-1), rtol=0, atol=1e-10)

    def test_logit_space_matches_literal_product(self, rng):
        p = rng.uniform(0.05, 0.95, size=(100, 4))
        alpha = rng.uniform(0.0, 2.0, size=(100, 4))
        assert_allclose(smil(p, alpha), literal_smil(p, alpha), rtol=1e-12)

    def test_long_bags_stay_finite(self):
        p = np.full(5000, 0.01)
        assert smil(p) == pytest.approx(0.0, abs=1e-300)
        assert np.isfinite(smil_logit(p))

    def test_convex_combination_bound(self, rng):
        P = rng.uniform(0.01, 0.99, size=(1000, 5))
        alpha = rng.dirichlet(np.ones(5), size=1000)
        out = smil(P, alpha)
        assert (out >= P.min(axis=-1) * (1 - 1e-12)).all()
        assert (out <= P.max(axis=-1) * (1 + 1e-12)).all()

    def test_monotone_in_each_instance(self, rng):
        p = rng.uniform(0.1, 0.9, size=5)
        alpha = rng.uniform(0.1, 1.0, size=5)
        for j in range(5):
            bumped = p.copy()
            bumped[j] += 0.05
            assert smil(bumped, alpha) > smil(p, alpha)
            assert noisy_or(bumped) > noisy_or(p)

    def test_embedded_matches_instance_space(self, rng):
        # moderate classifier scale keeps instance probabilities away from the clamp
        for _ in range(1000):
            H = rng.standard_normal((5, 8))
            params = AttentionParams(w=rng.standard_normal(8), W=0.5 * rng.standard_normal(8), b=0.1)
            alpha = attention_weights(H, params)
            embedded = bag_prob_embedded(H, params, alpha)
            assert embedded == pytest.approx(smil(instance_probs(H, params), alpha), rel=1e-12)

    def test_embedded_matches_instance_logits(self, rng):
        for _ in range(1000):
            m, d = int(rng.integers(1, 17)), int(rng.integers(1, 33))
            H = rng.standard_normal((m, d))
            params = AttentionParams(w=rng.standard_normal(d), W=rng.standard_normal(d), b=float(rng.standard_normal()))
            alpha = attention_weights(H, params)
            expected = smil_from_logits(instance_logits(H, params), alpha)
            assert bag_prob_embedded(H, params, alpha) == pytest.approx(expected, rel=1e-12)

    def test_logit_form_rejects_empty_bag(self):
        with pytest.raises(ValueError, match="at least one"):
            smil_from_logits(np.zeros(0))

    def test_bias_free_mode_with_unnormalized_weights(self, rng):
        H = rng.standard_normal((6, 3))
        params = AttentionParams(w=np.zeros(3), W=rng.standard_normal(3), b=2.0)
        alpha = rng.uniform(0.5, 3.0, size=6)
        embedded = bag_prob_embedded(H, params, alpha, use_bias=False)
        assert embedded == pytest.approx(smil(instance_probs(H, params, use_bias=False), alpha), rel=1e-12)


class TestValidation:
    def test_clamping(self):
        clamped = clamp_probs([0.0, 1.0, 0.5])
        assert clamped[0] == PROB_EPS
        assert clamped[1] == 1.0 - PROB_EPS
        assert np.isfinite(logit([0.0, 1.0])).all()

    @pytest.mark.parametrize("bad", [[], [1.2], [-0.1, 0.5], [np.nan]])
    def test_rejects_invalid_probabilities(self, bad):
        with pytest.raises(ValueError):
            smil(bad)

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError, match="nonnegative"):
            smil([0.2, 0.3], [1.0, -1.0])

    def test_rejects_mismatched_weights(self):
        with pytest.raises(ValueError, match="do not match"):
            smil([0.2, 0.3, 0.4], [1.0, 1.0])

    def test_rejects_dimension_mismatch(self):
        params = AttentionParams(w=np.ones(3), W=np.ones(3))
        with pytest.raises(ValueError, match="dimension"):
            attention_weights(np.ones((4, 2)), params)

    def test_attention_params_validation(self):
        with pytest.raises(ValueError):
            AttentionParams(w=np.ones(3), W=np.ones(2))
        with pytest.raises(ValueError):
            AttentionParams(w=[np.inf], W=[1.0])
