"""Latent-space analysis of 3D volumetric cohorts.

Pipeline: seeded phantom cohorts -> 3D convolutional autoencoder ->
layer-wise embeddings (PCA / PLS / t-SNE / UMAP) -> atlas-region correlation
-> SHAP region attribution -> concentration-bound validation ->
latent-regional correlation profiling (LRCP).
"""

__version__ = "0.1.0"

from .data import (
    CLASS_AD,
    CLASS_MCI,
    CLASS_MCIC,
    CLASS_NOR,
    AtlasMap,
    Cohort,
    RegionProfileMatrix,
    Subject,
    Volume,
    balanced_subset,
    build_region_profiles,
    region_means,
)
from .phantom import PhantomConfig, generate_phantom_cohort
from .autoencoder import TrainConfig, train, extract_activations
from .config import PipelineConfig, load_config, config_hash
from .validation import (
    BoundConfig,
    concentration_bound,
    cubv_corrected_error,
    pac_bayes_corrected_accuracy,
    sar_relevance,
)
from .lrcp import lrcp_cell, lrcp_grid, summary_counts, accuracy_map

__all__ = [
    "CLASS_NOR",
    "CLASS_MCI",
    "CLASS_MCIC",
    "CLASS_AD",
    "Volume",
    "AtlasMap",
    "Subject",
    "Cohort",
    "RegionProfileMatrix",
    "region_means",
    "build_region_profiles",
    "balanced_subset",
    "PhantomConfig",
    "generate_phantom_cohort",
    "TrainConfig",
    "train",
    "extract_activations",
    "PipelineConfig",
    "load_config",
    "config_hash",
    "BoundConfig",
    "concentration_bound",
    "cubv_corrected_error",
    "pac_bayes_corrected_accuracy",
    "sar_relevance",
    "lrcp_cell",
    "lrcp_grid",
    "summary_counts",
    "accuracy_map",
    "__version__",
]
