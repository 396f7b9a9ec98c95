"""t-SNE tests: affinity calibration oracles, KL behavior, benchmark recovery."""

import numpy as np
import pytest

from latentscope.embedding.common import pairwise_sq_dists, standardize
from latentscope.embedding.tsne import (
    conditional_probabilities,
    kl_divergence,
    perplexity_of,
    tsne_embed,
)
from latentscope.errors import DegenerateInputError

from conftest import cluster_margin, two_clusters


class TestAffinities:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        d2 = pairwise_sq_dists(rng.normal(size=(25, 4)))
        p = conditional_probabilities(d2, perplexity=8.0)
        np.testing.assert_allclose(p.sum(axis=1), np.ones(25), atol=1e-12)
        np.testing.assert_array_equal(np.diag(p), np.zeros(25))

    def test_per_row_perplexity_hits_target(self):
        rng = np.random.default_rng(1)
        d2 = pairwise_sq_dists(rng.normal(size=(30, 5)))
        for target in (5.0, 12.0, 20.0):
            p = conditional_probabilities(d2, perplexity=target)
            for i in range(30):
                assert perplexity_of(p[i]) == pytest.approx(target, abs=1e-3)

    def test_symmetrized_matrix_sums_to_one(self):
        rng = np.random.default_rng(2)
        d2 = pairwise_sq_dists(rng.normal(size=(20, 3)))
        p_cond = conditional_probabilities(d2, perplexity=6.0)
        p = (p_cond + p_cond.T) / (2 * 20)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(p, p.T, atol=1e-15)

    def test_uniform_distribution_perplexity(self):
        m = 17
        row = np.full(m, 1.0 / m)
        assert perplexity_of(row) == pytest.approx(m, rel=1e-12)

    def test_perplexity_of_point_mass(self):
        row = np.zeros(10)
        row[3] = 1.0
        assert perplexity_of(row) == pytest.approx(1.0, rel=1e-12)

    def test_nearest_neighbor_gets_most_mass(self):
        # low perplexity concentrates each row on its nearest neighbors
        x = np.array([[0.0], [0.1], [5.0], [5.1], [10.0], [10.1]])
        d2 = pairwise_sq_dists(x)
        p = conditional_probabilities(d2, perplexity=1.5)
        for i in range(6):
            partner = i + 1 if i % 2 == 0 else i - 1
            assert np.argmax(p[i]) == partner


class TestKl:
    def test_identical_distributions_zero(self):
        rng = np.random.default_rng(3)
        p = rng.uniform(size=(10, 10))
        np.fill_diagonal(p, 0.0)
        p /= p.sum()
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        p = rng.uniform(size=50)
        p /= p.sum()
        q = rng.uniform(size=50)
        q /= q.sum()
        assert kl_divergence(p, q) >= 0.0

    def test_tail_non_increasing_on_benchmark(self):
        # after early exaggeration ends the optimizer should settle; each of
        # the last 100 recorded steps may rise by at most 1e-6
        values = two_clusters(seed=0)
        emb = tsne_embed(values, dims=3, perplexity=5.0, lr=100.0,
                         iters=1000, seed=0)
        kl = emb.metadata["kl_history"]
        tail = kl[-100:]
        worst = float(np.max(np.diff(tail)))
        assert worst <= 1e-6
        assert np.isfinite(kl).all()


class TestEmbedding:
    def test_too_few_rows_raises(self):
        with pytest.raises(DegenerateInputError):
            tsne_embed(np.zeros((3, 4)))

    def test_perplexity_lowered_with_warning(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(20, 4))
        with pytest.warns(UserWarning, match="perplexity"):
            emb = tsne_embed(x, perplexity=30.0, iters=5, seed=0)
        assert emb.metadata["perplexity"] == pytest.approx((20 - 1) // 3)
        assert any("perplexity_lowered" in s for s in emb.metadata["notes"])

    def test_duplicate_points_jittered(self):
        x = np.zeros((8, 3))
        x[4:] = 1.0  # two stacks of identical points
        emb = tsne_embed(x, perplexity=2.0, iters=5, seed=0)
        assert "duplicate_points_jittered" in emb.metadata["notes"]
        assert np.isfinite(emb.values).all()

    def test_seed_determinism(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(15, 4))
        a = tsne_embed(x, perplexity=4.0, iters=50, seed=9)
        b = tsne_embed(x, perplexity=4.0, iters=50, seed=9)
        c = tsne_embed(x, perplexity=4.0, iters=50, seed=10)
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_output_shape_and_metadata(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(12, 6))
        emb = tsne_embed(x, dims=2, perplexity=3.0, iters=20, seed=1,
                         subject_ids=[f"Q{i}" for i in range(12)], layer="L1")
        assert emb.values.shape == (12, 2)
        assert emb.method == "tsne"
        assert emb.layer == "L1"
        assert emb.subject_ids == [f"Q{i}" for i in range(12)]
        assert len(emb.metadata["kl_history"]) == 20

    def test_embedding_is_centered(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(12, 5))
        emb = tsne_embed(x, perplexity=3.0, iters=30, seed=2)
        np.testing.assert_allclose(emb.values.mean(axis=0), 0.0, atol=1e-9)


class TestBenchmark:
    def test_separates_planted_clusters_at_defaults(self):
        # 20 points, two 10-sigma-apart gaussian clusters; library defaults
        # (perplexity auto-lowered, lr 200, 1000 iterations) must separate
        # them for every seed tried
        for seed in range(3):
            values = two_clusters(seed=seed)
            with pytest.warns(UserWarning, match="perplexity"):
                emb = tsne_embed(values, dims=3, seed=seed)
            assert cluster_margin(emb.values) > 0.0

    def test_standardization_is_applied(self):
        # scaling one feature by 1000 must not change the result: distances
        # are computed on z-scored features
        values = two_clusters(seed=1)
        scaled = values.copy()
        scaled[:, 0] *= 1000.0
        xs_a, _, _, _ = standardize(values)
        xs_b, _, _, _ = standardize(scaled)
        np.testing.assert_allclose(xs_a, xs_b, atol=1e-12)
        # rounding noise in the rescaled z-scores amplifies through the
        # optimizer, so the invariant is checked on the affinities
        p_a = conditional_probabilities(pairwise_sq_dists(xs_a), 5.0)
        p_b = conditional_probabilities(pairwise_sq_dists(xs_b), 5.0)
        np.testing.assert_allclose(p_a, p_b, atol=1e-9)
