"""Shared fixtures: small phantom cohorts, a trained desk-scale model, and
the session-wide pipeline run reused by the acceptance tests."""

import warnings

import numpy as np
import pytest

from latentscope.autoencoder import TrainConfig, train
from latentscope.config import EmbedConfig, PipelineConfig
from latentscope.phantom import PhantomConfig, generate_phantom_cohort
from latentscope.pipeline import run_all


def two_clusters(seed: int, n_per: int = 10, d: int = 5, sep: float = 10.0):
    """Two Gaussian clusters whose centroids are sep standard deviations apart
    (total Euclidean separation, spread evenly over the d axes)."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, size=(n_per, d))
    b = rng.normal(0.0, 1.0, size=(n_per, d)) + sep / np.sqrt(d)
    return np.vstack([a, b])


def cluster_margin(values: np.ndarray, n_per: int = 10) -> float:
    """Worst-case margin of the centroid-difference projection: positive iff
    the two clusters are linearly separable along that direction."""
    va, vb = values[:n_per], values[n_per:]
    w = vb.mean(axis=0) - va.mean(axis=0)
    return float((vb @ w).min() - (va @ w).max())


# Ten regions shifted for the AD class, none for MCI: the ground-truth layout
# behind the discriminative-pattern and determinism checks.
AD_SHIFTED_REGIONS = (2, 5, 7, 11, 13, 17, 19, 23, 26, 29)
AD_EFFECTS = [(2, 3, 0.40), (5, 3, 0.30), (7, 3, 0.20), (11, 3, 0.35),
              (13, 3, 0.25), (17, 3, 0.40), (19, 3, 0.30), (23, 3, 0.20),
              (26, 3, 0.35), (29, 3, 0.25)]


def study_config(out_dir: str) -> PipelineConfig:
    """The end-to-end study configuration: 120 subjects, 32 regions, ten of
    them shifted for AD only, all four embedding methods over three layers."""
    return PipelineConfig(
        phantom=PhantomConfig(dims=(32, 32, 32), region_count=32,
                              class_counts={0: 40, 1: 40, 3: 40},
                              effect_spec=list(AD_EFFECTS),
                              noise_sigma=0.05, smoothness=2.0, seed=0),
        train=TrainConfig(loss_kind="mse", max_epochs=10, patience=10,
                          batch_size=8, seed=0),
        embed=EmbedConfig(layers=("L1", "L2", "L3"), components=3),
        comparisons=("NOR_AD", "NOR_MCI"),
        seed=0,
        out_dir=out_dir,
    )


@pytest.fixture(scope="session")
def small_cohort():
    cfg = PhantomConfig(dims=(16, 16, 16), region_count=8,
                        class_counts={0: 12, 3: 12},
                        effect_spec=[(3, 3, 0.35)],
                        noise_sigma=0.05, smoothness=1.5, seed=11)
    return generate_phantom_cohort(cfg)


@pytest.fixture(scope="session")
def trained_small(small_cohort):
    cfg = TrainConfig(loss_kind="mse", max_epochs=2, patience=2,
                      batch_size=8, seed=5)
    model, report = train(small_cohort, cfg)
    return model, report


@pytest.fixture(scope="session")
def study_run(tmp_path_factory):
    """One full pipeline run of the study configuration, shared by the
    acceptance tests (attribution exactness, LRCP pattern, determinism)."""
    out = tmp_path_factory.mktemp("study")
    cfg = study_config(str(out))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run_all(cfg, str(out))
    return cfg, out
