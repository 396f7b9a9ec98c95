"""Principal component analysis via SVD of the centered data matrix.

Eigenpairs of the empirical covariance S = X_c^T X_c / (n-1) are recovered
from the singular values (lambda_i = s_i^2/(n-1)); scores are the centered
rows projected onto the axes. Sign convention: each axis is flipped so its
largest-magnitude loading is positive, which makes axes reproducible across
runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateInputError
from .common import EmbeddingMatrix, center


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, p), rows orthonormal (zero rows when deficient)
    eigenvalues: np.ndarray  # (k,), descending
    rank: int
    rank_deficient: bool
    metadata: dict = field(default_factory=dict)


def _fix_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for i in range(out.shape[0]):
        row = out[i]
        if row.any():
            j = int(np.argmax(np.abs(row)))
            if row[j] < 0:
                out[i] = -row
    return out


def pca_fit_transform(x: np.ndarray, k: int = 3,
                      subject_ids: list[str] | None = None,
                      layer: str = "L3") -> tuple[PcaModel, EmbeddingMatrix]:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise DegenerateInputError("PCA needs at least 2 rows")
    xc, mean = center(x)
    # economy SVD: singular values/axes of the centered matrix
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    tol = s[0] * max(x.shape) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int((s > tol).sum())
    p = x.shape[1]
    components = np.zeros((k, p))
    eigenvalues = np.zeros(k)
    usable = min(k, rank)
    components[:usable] = vt[:usable]
    eigenvalues[:usable] = (s[:usable] ** 2) / (n - 1)
    components = _fix_signs(components)
    scores = xc @ components.T
    model = PcaModel(
        mean=mean,
        components=components,
        eigenvalues=eigenvalues,
        rank=rank,
        rank_deficient=rank < k,
        metadata={"n": n, "k": k},
    )
    if subject_ids is None:
        subject_ids = [f"S{i:04d}" for i in range(n)]
    emb = EmbeddingMatrix(
        method="pca",
        layer=layer,
        values=scores,
        subject_ids=list(subject_ids),
        metadata={"rank_deficient": model.rank_deficient},
    )
    return model, emb
