"""Attribution tests: exact Shapley values against brute-force enumeration."""

import itertools
from math import factorial

import numpy as np
import pytest

from latentscope.attribution import (
    attribute_class,
    build_shap_volume,
    shap_region_importance,
    shap_values,
    total_reconstruction_error,
    tree_shap,
)
from latentscope.data import AtlasMap, Volume
from latentscope.errors import ConfigError, DegenerateInputError, ShapeError
from latentscope.forest import ForestConfig, forest_predict, rf_fit


def brute_force_shap(model, x_row, bg):
    """Textbook Shapley values of the interventional game, all coalitions.

    v(S) averages the forest prediction over background rows with the
    features outside S replaced by the background row's values.
    """
    m = model.feature_count

    def value(subset):
        mask = np.zeros(m, dtype=bool)
        mask[list(subset)] = True
        mixed = np.where(mask, x_row, bg)
        return float(forest_predict(model, mixed).mean())

    phi = np.zeros(m)
    others = list(range(m))
    for i in range(m):
        rest = [j for j in others if j != i]
        for size in range(m):
            for subset in itertools.combinations(rest, size):
                weight = factorial(size) * factorial(m - size - 1) / factorial(m)
                phi[i] += weight * (value(subset + (i,)) - value(subset))
    return phi


def small_forest(m=5, n=40, seed=0, n_trees=5, max_depth=3):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, m))
    y = 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2] * x[:, 0] + 0.05 * rng.normal(size=n)
    model = rf_fit(x, y, ForestConfig(n_trees=n_trees, max_depth=max_depth,
                                      seed=seed))
    return model, x, y


class TestShapExactness:
    def test_matches_brute_force(self):
        model, x, _ = small_forest(m=5, n=40, seed=0)
        bg = x[:10]
        explained = x[10:13]
        phi, base = shap_values(model, explained, bg)
        for row, phi_row in zip(explained, phi):
            expected = brute_force_shap(model, row, bg)
            np.testing.assert_allclose(phi_row, expected, atol=1e-8)
        assert base == pytest.approx(float(forest_predict(model, bg).mean()),
                                     abs=1e-12)

    def test_matches_brute_force_deeper(self):
        model, x, _ = small_forest(m=4, n=60, seed=3, n_trees=8, max_depth=5)
        bg = x[:16]
        phi, _ = shap_values(model, x[20:22], bg)
        for row, phi_row in zip(x[20:22], phi):
            np.testing.assert_allclose(phi_row, brute_force_shap(model, row, bg),
                                       atol=1e-8)

    def test_local_accuracy(self):
        # base + sum of attributions must reproduce the prediction exactly
        model, x, _ = small_forest(m=6, n=80, seed=1, n_trees=20, max_depth=4)
        bg = x[:30]
        explained = x[30:50]
        phi, base = shap_values(model, explained, bg)
        preds = forest_predict(model, explained)
        np.testing.assert_allclose(base + phi.sum(axis=1), preds, atol=1e-8)

    def test_null_player_gets_zero(self):
        # a constant column can never split, so its attribution is exactly 0
        rng = np.random.default_rng(2)
        x = rng.uniform(size=(50, 4))
        x[:, 3] = 0.7
        y = x[:, 0] + x[:, 1]
        model = rf_fit(x, y, ForestConfig(n_trees=10, max_depth=4, seed=2))
        phi, _ = shap_values(model, x[:5], x)
        np.testing.assert_array_equal(phi[:, 3], np.zeros(5))

    def test_single_background_row(self):
        model, x, _ = small_forest(m=4, n=30, seed=4)
        phi, base = shap_values(model, x[5:6], x[0:1])
        expected = brute_force_shap(model, x[5], x[0:1])
        np.testing.assert_allclose(phi[0], expected, atol=1e-8)
        assert base == pytest.approx(float(forest_predict(model, x[0:1])[0]))

    def test_tree_shap_wrapper(self):
        model, x, _ = small_forest()
        phi, base = shap_values(model, x[3:4], x[:8])
        phi1, base1 = tree_shap(model, x[3], x[:8])
        np.testing.assert_array_equal(phi1, phi[0])
        assert base1 == base
        with pytest.raises(ShapeError):
            tree_shap(model, x[3:4], x[:8])

    def test_feature_mismatch_raises(self):
        model, x, _ = small_forest(m=5)
        with pytest.raises(ShapeError):
            shap_values(model, x[:2, :4], x)

    def test_empty_background_raises(self):
        model, x, _ = small_forest(m=5)
        with pytest.raises(DegenerateInputError):
            shap_values(model, x[:2], x[:0])


class TestImportance:
    def test_min_max_normalization(self):
        phi = np.array([[2.0, -4.0, 6.0]])
        s, s_tilde, flags = shap_region_importance(phi)
        np.testing.assert_array_equal(s, [2.0, 4.0, 6.0])
        np.testing.assert_allclose(s_tilde, [0.0, 0.5, 1.0], atol=1e-6)
        assert flags == []

    def test_mean_abs_over_subjects(self):
        phi = np.array([[1.0, 0.0], [-3.0, 0.0]])
        s, _, _ = shap_region_importance(phi)
        np.testing.assert_array_equal(s, [2.0, 0.0])

    def test_uniform_importance_flagged(self):
        phi = np.array([[0.5, -0.5, 0.5], [-0.5, 0.5, 0.5]])
        _, s_tilde, flags = shap_region_importance(phi)
        assert "uniform_importance" in flags
        np.testing.assert_array_equal(s_tilde, np.zeros(3))

    def test_empty_raises(self):
        with pytest.raises(DegenerateInputError):
            shap_region_importance(np.zeros((0, 4)))

    def test_ranking_invariant_to_target_scale(self):
        # scaling targets by a power of two commutes exactly with float
        # rounding, so split decisions are bitwise identical and the
        # attributions rescale linearly (a non-dyadic factor could flip
        # near-tie splits and change the forest)
        rng = np.random.default_rng(5)
        x = rng.uniform(size=(40, 5))
        y = 3.0 * x[:, 2] + x[:, 0] + 0.1 * rng.normal(size=40)
        res1 = attribute_class(x, y, 3, config=ForestConfig(n_trees=10, seed=6))
        res2 = attribute_class(x, 8.0 * y, 3, config=ForestConfig(n_trees=10, seed=6))
        np.testing.assert_allclose(8.0 * res1.phi, res2.phi, atol=1e-12)
        np.testing.assert_allclose(res1.s_tilde, res2.s_tilde, atol=1e-6)


class TestAttributeClass:
    def test_planted_region_dominates(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(size=(60, 6))
        y = 5.0 * x[:, 4] + 0.05 * rng.normal(size=60)
        res = attribute_class(x, y, 3, config=ForestConfig(seed=0))
        assert int(np.argmax(res.s_tilde)) == 4
        assert res.s_tilde[4] == pytest.approx(1.0, abs=1e-6)
        assert res.class_label == 3
        assert res.phi.shape == (60, 6)
        assert len(res.forest_hash) == 64

    def test_subject_ids_carried(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(size=(10, 3))
        y = x[:, 0]
        ids = [f"A{i}" for i in range(10)]
        res = attribute_class(x, y, 1, config=ForestConfig(n_trees=5, seed=0),
                              subject_ids=ids)
        assert res.subject_ids == ids


class TestShapVolume:
    def test_paints_regions(self):
        labels = np.zeros((4, 4, 4), dtype=np.int32)
        labels[:2] = 1
        labels[2:, :2] = 2
        atlas = AtlasMap(labels, region_count=2)
        vol = build_shap_volume([0.3, 0.9], atlas)
        assert vol.voxels.shape == (4, 4, 4)
        assert float(vol.voxels[0, 0, 0]) == pytest.approx(0.3)
        assert float(vol.voxels[3, 0, 0]) == pytest.approx(0.9)
        assert float(vol.voxels[3, 3, 3]) == 0.0  # background label 0

    def test_mask_applied(self):
        labels = np.ones((2, 2, 2), dtype=np.int32)
        atlas = AtlasMap(labels, region_count=1)
        mask = np.zeros((2, 2, 2), dtype=np.float32)
        mask[0] = 1.0
        vol = build_shap_volume([1.0], atlas, gm_mask=Volume(mask))
        assert float(vol.voxels[0, 0, 0]) == 1.0
        assert float(vol.voxels[1, 1, 1]) == 0.0

    def test_length_mismatch_raises(self):
        atlas = AtlasMap(np.ones((2, 2, 2), dtype=np.int32), region_count=1)
        with pytest.raises(ShapeError):
            build_shap_volume([0.5, 0.5], atlas)

    def test_range_checked(self):
        atlas = AtlasMap(np.ones((2, 2, 2), dtype=np.int32), region_count=1)
        with pytest.raises(ConfigError):
            build_shap_volume([1.5], atlas)


class TestReconstructionError:
    def test_matches_manual_forward(self, small_cohort, trained_small):
        from latentscope.autoencoder import forward

        model, _ = trained_small
        errors = total_reconstruction_error(small_cohort, model)
        assert set(errors) == set(small_cohort.subject_ids)
        subj = small_cohort.subjects[0]
        x = subj.volume.voxels[None, None]
        recon, _, _ = forward(model, x, mode="eval")
        manual = float(((recon - x) ** 2).sum())
        # batched and single-row convolutions take different BLAS paths, so
        # agreement is to high precision rather than bitwise
        assert errors[subj.id] == pytest.approx(manual, rel=1e-9)

    def test_chunk_invariance(self, small_cohort, trained_small):
        model, _ = trained_small
        a = total_reconstruction_error(small_cohort, model, chunk=3)
        b = total_reconstruction_error(small_cohort, model, chunk=100)
        assert a == b
