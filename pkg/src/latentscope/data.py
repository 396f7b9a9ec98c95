"""Core data model: volumes, atlases, subjects, cohorts, region profiles.

Volumes are dense 3D scalar fields with intensities in [0,1], stored as
float32 in memory in (dx, dy, dz) index order. Atlases share the volume grid
and assign every voxel a region id in {0..R}, 0 meaning background. All
region statistics exclude background voxels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeError

CLASS_NOR = 0
CLASS_MCI = 1
CLASS_MCIC = 2
CLASS_AD = 3

CLASS_NAMES = {CLASS_NOR: "NOR", CLASS_MCI: "MCI", CLASS_MCIC: "MCIc", CLASS_AD: "AD"}
CLASS_IDS = {name: label for label, name in CLASS_NAMES.items()}
VALID_CLASS_LABELS = frozenset(CLASS_NAMES)


@dataclass
class Volume:
    """Dense scalar field with values in [0,1]."""

    voxels: np.ndarray

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float32)
        if self.voxels.ndim != 3:
            raise ShapeError(f"volume must be 3D, got shape {self.voxels.shape}")
        if any(d <= 0 for d in self.voxels.shape):
            raise ShapeError(f"volume dims must be positive, got {self.voxels.shape}")
        if not np.isfinite(self.voxels).all():
            raise ValueError("volume contains non-finite voxels")
        lo, hi = float(self.voxels.min()), float(self.voxels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"voxel values outside [0,1]: min={lo}, max={hi}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.voxels.shape)


@dataclass
class AtlasMap:
    """Per-voxel region labels in {0..R}; every id in 1..R occurs."""

    labels: np.ndarray
    region_count: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint32)
        if self.labels.ndim != 3:
            raise ShapeError(f"atlas must be 3D, got shape {self.labels.shape}")
        self.region_count = int(self.region_count)
        if self.region_count < 1:
            raise ValueError("region_count must be >= 1")
        max_label = int(self.labels.max())
        if max_label > self.region_count:
            raise ValueError(
                f"label {max_label} exceeds region_count {self.region_count}"
            )
        present = np.unique(self.labels)
        wanted = np.arange(1, self.region_count + 1, dtype=np.uint32)
        missing = np.setdiff1d(wanted, present)
        if missing.size:
            raise ValueError(f"region ids missing from atlas: {missing.tolist()}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.labels.shape)


@dataclass
class Subject:
    id: str
    class_label: int
    volume: Volume

    def __post_init__(self):
        if self.class_label not in VALID_CLASS_LABELS:
            raise ValueError(f"class_label must be one of 0..3, got {self.class_label}")


@dataclass
class Cohort:
    """Ordered list of subjects sharing one atlas grid."""

    subjects: list[Subject]
    atlas: AtlasMap
    seed: int = 0

    def __post_init__(self):
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValueError("subject ids must be unique")
        for s in self.subjects:
            if s.volume.dims != self.atlas.dims:
                raise ShapeError(
                    f"subject {s.id} dims {s.volume.dims} != atlas dims {self.atlas.dims}"
                )

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def class_labels(self) -> np.ndarray:
        return np.array([s.class_label for s in self.subjects], dtype=np.int64)

    @property
    def subject_ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    def class_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for s in self.subjects:
            counts[s.class_label] = counts.get(s.class_label, 0) + 1
        return counts


@dataclass
class RegionProfileMatrix:
    """n_subjects x R matrix of mean region intensities (row i = subject i)."""

    values: np.ndarray
    subject_ids: list[str]
    region_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError("profile matrix must be 2D")
        if self.values.shape[0] != len(self.subject_ids):
            raise ShapeError("profile row count != subject id count")
        if self.region_ids is None:
            self.region_ids = np.arange(1, self.values.shape[1] + 1, dtype=np.int64)
        else:
            self.region_ids = np.asarray(self.region_ids, dtype=np.int64)
        if self.region_ids.shape[0] != self.values.shape[1]:
            raise ShapeError("region id count != profile column count")

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def n_regions(self) -> int:
        return self.values.shape[1]


def region_means(volume: Volume, atlas: AtlasMap) -> np.ndarray:
    """Mean intensity per region id 1..R, background (label 0) excluded."""
    if volume.dims != atlas.dims:
        raise ShapeError(f"volume dims {volume.dims} != atlas dims {atlas.dims}")
    labels = atlas.labels.ravel()
    vals = volume.voxels.ravel().astype(np.float64)
    r = atlas.region_count
    sums = np.bincount(labels, weights=vals, minlength=r + 1)
    counts = np.bincount(labels, minlength=r + 1)
    empty = np.nonzero(counts[1:] == 0)[0]
    if empty.size:
        raise DegenerateInputError(f"empty region id {int(empty[0]) + 1}")
    return sums[1:] / counts[1:]


def build_region_profiles(cohort: Cohort) -> RegionProfileMatrix:
    """Stack region_means of every subject, rows in cohort order."""
    if len(cohort) == 0:
        raise DegenerateInputError("cohort is empty")
    rows = [region_means(s.volume, cohort.atlas) for s in cohort.subjects]
    return RegionProfileMatrix(
        values=np.vstack(rows),
        subject_ids=cohort.subject_ids,
        region_ids=np.arange(1, cohort.atlas.region_count + 1, dtype=np.int64),
    )


def balanced_subset(cohort: Cohort, groups: set[int], seed: int) -> Cohort:
    """Seeded balanced subsample of the requested classes.

    Every requested class is downsampled (uniform, without replacement) to the
    minimum requested-class count; subjects of other classes are dropped.
    Original subject order is preserved, so an already-balanced cohort comes
    back with identical membership and order.
    """
    groups = set(int(g) for g in groups)
    if not groups:
        raise ConfigError("balanced_subset needs at least one class")
    counts = cohort.class_counts()
    for g in sorted(groups):
        if g not in counts:
            raise ConfigError(f"requested class {g} absent from cohort")
    target = min(counts[g] for g in groups)
    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    for g in sorted(groups):
        idx = [i for i, s in enumerate(cohort.subjects) if s.class_label == g]
        if len(idx) == target:
            keep.update(idx)
        else:
            chosen = rng.choice(len(idx), size=target, replace=False)
            keep.update(idx[int(c)] for c in chosen)
    subjects = [s for i, s in enumerate(cohort.subjects) if i in keep]
    return Cohort(subjects=subjects, atlas=cohort.atlas, seed=cohort.seed)
