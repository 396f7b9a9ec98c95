"""Phantom cohort generator: determinism, planted effects, config checks."""

import numpy as np
import pytest

from latentscope.data import build_region_profiles
from latentscope.errors import ConfigError
from latentscope.phantom import (PhantomConfig, generate_phantom_cohort,
                                 voronoi_atlas)


def test_zero_noise_no_effects_gives_identical_subjects():
    cfg = PhantomConfig(dims=(8, 8, 8), region_count=4,
                        class_counts={0: 3, 3: 3},
                        noise_sigma=0.0, smoothness=1.0, seed=5)
    cohort = generate_phantom_cohort(cfg)
    first = cohort.subjects[0].volume.voxels
    for s in cohort.subjects[1:]:
        assert np.array_equal(s.volume.voxels, first)


def test_default_class_counts_give_818_subjects():
    cfg = PhantomConfig(dims=(8, 8, 8), region_count=8,
                        class_counts={0: 229, 1: 252, 2: 149, 3: 188},
                        noise_sigma=0.0, smoothness=0.0, seed=0)
    cohort = generate_phantom_cohort(cfg)
    assert len(cohort) == 818
    assert cohort.class_counts() == {0: 229, 1: 252, 2: 149, 3: 188}


def test_seeded_generation_is_bit_identical():
    cfg = PhantomConfig(dims=(8, 8, 8), region_count=4,
                        class_counts={0: 2, 1: 2},
                        effect_spec=[(2, 1, 0.2)],
                        noise_sigma=0.05, smoothness=1.0, seed=7)
    a = generate_phantom_cohort(cfg)
    b = generate_phantom_cohort(cfg)
    assert np.array_equal(a.atlas.labels, b.atlas.labels)
    for sa, sb in zip(a.subjects, b.subjects):
        assert sa.id == sb.id
        assert sa.class_label == sb.class_label
        assert np.array_equal(sa.volume.voxels, sb.volume.voxels)


def test_different_seeds_differ():
    base = dict(dims=(8, 8, 8), region_count=4, class_counts={0: 2},
                noise_sigma=0.05, smoothness=1.0)
    a = generate_phantom_cohort(PhantomConfig(seed=0, **base))
    b = generate_phantom_cohort(PhantomConfig(seed=1, **base))
    assert not np.array_equal(a.subjects[0].volume.voxels,
                              b.subjects[0].volume.voxels)


def test_voxels_stay_in_unit_interval(small_cohort):
    for s in small_cohort.subjects:
        v = s.volume.voxels
        assert v.min() >= 0.0 and v.max() <= 1.0


def test_planted_shift_survives_in_profiles():
    shift = 0.3
    cfg = PhantomConfig(dims=(16, 16, 16), region_count=8,
                        class_counts={0: 20, 3: 20},
                        effect_spec=[(5, 3, shift)],
                        noise_sigma=0.02, smoothness=1.5, seed=13)
    cohort = generate_phantom_cohort(cfg)
    profiles = build_region_profiles(cohort)
    labels = cohort.class_labels
    col = list(profiles.region_ids).index(5)
    observed = (profiles.values[labels == 3, col].mean()
                - profiles.values[labels == 0, col].mean())
    region_voxels = int((cohort.atlas.labels == 5).sum())
    tol = max(3 * cfg.noise_sigma / np.sqrt(region_voxels), 5e-3)
    assert observed == pytest.approx(shift, abs=tol)


def test_unshifted_regions_stay_put():
    cfg = PhantomConfig(dims=(16, 16, 16), region_count=8,
                        class_counts={0: 20, 3: 20},
                        effect_spec=[(5, 3, 0.3)],
                        noise_sigma=0.02, smoothness=1.5, seed=13)
    cohort = generate_phantom_cohort(cfg)
    profiles = build_region_profiles(cohort)
    labels = cohort.class_labels
    for col, region in enumerate(profiles.region_ids):
        if region == 5:
            continue
        gap = abs(profiles.values[labels == 3, col].mean()
                  - profiles.values[labels == 0, col].mean())
        assert gap < 0.02


def test_voronoi_atlas_covers_all_regions():
    rng = np.random.default_rng(21)
    atlas = voronoi_atlas((10, 10, 10), 16, rng)
    present = np.unique(atlas.labels)
    assert set(range(1, 17)) <= set(int(p) for p in present)


class TestConfigValidation:
    def test_dims_too_small_for_regions(self):
        cfg = PhantomConfig(dims=(2, 2, 2), region_count=32,
                            class_counts={0: 1})
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_unknown_class_label(self):
        cfg = PhantomConfig(class_counts={9: 3})
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_negative_count(self):
        cfg = PhantomConfig(class_counts={0: -1})
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_effect_region_out_of_range(self):
        cfg = PhantomConfig(region_count=8, class_counts={0: 1},
                            effect_spec=[(9, 0, 0.1)])
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_effect_shift_out_of_range(self):
        cfg = PhantomConfig(class_counts={0: 1}, effect_spec=[(1, 0, 1.5)])
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_bad_template_range(self):
        cfg = PhantomConfig(class_counts={0: 1}, template_range=(0.9, 0.2))
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_negative_noise(self):
        cfg = PhantomConfig(class_counts={0: 1}, noise_sigma=-0.1)
        with pytest.raises(ConfigError):
            cfg.validate()
