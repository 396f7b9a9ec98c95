"""Pearson correlation between embedding components and region mean intensities.

Correlations are exact-sample Pearson r with two-tailed p-values from the
Student-t distribution (regularized incomplete beta, no normal approximation),
optionally stratified by class. Top-N tables are ranked by max |r| per region
and overlap reports intersect those sets across group comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .data import CLASS_NAMES
from .errors import ConfigError, DegenerateInputError, ShapeError

POOLED = "pooled"


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient.

    Raises DegenerateInputError when either input is constant, rather than
    silently returning 0: a constant region mean in a phantom cohort is a
    generator bug worth surfacing.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"pearson needs equal-length vectors, got {x.shape} and {y.shape}")
    n = x.size
    if n < 3:
        raise DegenerateInputError(f"pearson needs n >= 3, got {n}")
    xd = x - x.mean()
    yd = y - y.mean()
    sx = math.sqrt(float(xd @ xd))
    sy = math.sqrt(float(yd @ yd))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("correlation undefined for constant input")
    r = float(xd @ yd) / (sx * sy)
    return float(min(1.0, max(-1.0, r)))


def pearson_pvalue(r: float, n: int) -> float:
    """Two-tailed p-value for a sample correlation r at sample size n.

    t = r * sqrt((n-2) / (1-r^2)) follows Student-t with n-2 dof under the
    null; the two-tailed tail mass is I_{v/(v+t^2)}(v/2, 1/2) with v = n - 2.
    """
    if n < 3:
        raise DegenerateInputError(f"p-value needs n >= 3, got {n}")
    if abs(r) > 1.0:
        raise ConfigError(f"|r| must be <= 1, got {r}")
    one_minus_r2 = (1.0 - r) * (1.0 + r)
    if one_minus_r2 <= 1e-15:
        return 0.0
    nu = n - 2
    t2 = r * r * nu / one_minus_r2
    return float(betainc(nu / 2.0, 0.5, nu / (nu + t2)))


def critical_r(n: int, alpha: float = 0.05) -> float:
    """Smallest |r| reaching two-tailed significance alpha at sample size n."""
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if pearson_pvalue(mid, n) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class CorrelationResult:
    method: str
    layer: str
    component: int
    region: int
    class_label: str  # class name or "pooled"
    n: int
    r: float
    r_squared: float
    p_value: float
    flag: str = ""  # "", "undefined", "too_few"
    x: np.ndarray | None = None  # component values behind this row
    y: np.ndarray | None = None  # region means behind this row

    @property
    def valid(self) -> bool:
        return self.flag == ""


@dataclass
class CorrelationTable:
    results: list[CorrelationResult]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.results)

    def valid_results(self) -> list[CorrelationResult]:
        return [res for res in self.results if res.valid]


def _class_name(label) -> str:
    if isinstance(label, str):
        return label
    return CLASS_NAMES.get(int(label), str(label))


def _correlate_rows(results, method, layer, emb_values, prof_values, region_ids,
                    class_label, keep_vectors):
    n = emb_values.shape[0]
    for comp in range(emb_values.shape[1]):
        xc = emb_values[:, comp]
        for j, region in enumerate(region_ids):
            yr = prof_values[:, j]
            try:
                r = pearson(xc, yr)
            except DegenerateInputError:
                results.append(CorrelationResult(
                    method=method, layer=layer, component=comp,
                    region=int(region), class_label=class_label, n=n,
                    r=float("nan"), r_squared=float("nan"),
                    p_value=float("nan"), flag="undefined"))
                continue
            results.append(CorrelationResult(
                method=method, layer=layer, component=comp, region=int(region),
                class_label=class_label, n=n, r=r, r_squared=r * r,
                p_value=pearson_pvalue(r, n),
                x=xc.copy() if keep_vectors else None,
                y=yr.copy() if keep_vectors else None))


def correlate_embedding_regions(embedding, profiles, labels=None,
                                stratify: bool = False,
                                keep_vectors: bool = True) -> CorrelationTable:
    """Correlate every embedding component with every region mean.

    Rows of the embedding and the profile matrix must describe the same
    subjects in the same order. Produces pooled results always and per-class
    results when stratify is set; classes with fewer than 3 subjects yield a
    flagged placeholder row instead of a correlation.
    """
    if list(embedding.subject_ids) != list(profiles.subject_ids):
        raise ShapeError("embedding and profile subject orders differ")
    emb = embedding.values
    prof = profiles.values
    if emb.shape[0] != prof.shape[0]:
        raise ShapeError(
            f"row count mismatch: {emb.shape[0]} embeddings vs {prof.shape[0]} profiles")
    if stratify and labels is None:
        raise ConfigError("stratified correlation needs class labels")

    results: list[CorrelationResult] = []
    _correlate_rows(results, embedding.method, embedding.layer, emb, prof,
                    profiles.region_ids, POOLED, keep_vectors)
    if stratify:
        labels = np.asarray(labels)
        if labels.shape[0] != emb.shape[0]:
            raise ShapeError("label count does not match row count")
        for label in sorted(set(int(v) for v in labels)):
            mask = labels == label
            name = _class_name(label)
            if int(mask.sum()) < 3:
                for comp in range(emb.shape[1]):
                    for region in profiles.region_ids:
                        results.append(CorrelationResult(
                            method=embedding.method, layer=embedding.layer,
                            component=comp, region=int(region),
                            class_label=name, n=int(mask.sum()),
                            r=float("nan"), r_squared=float("nan"),
                            p_value=float("nan"), flag="too_few"))
                continue
            _correlate_rows(results, embedding.method, embedding.layer,
                            emb[mask], prof[mask], profiles.region_ids, name,
                            keep_vectors)

    provenance = dict(embedding.metadata)
    provenance["method"] = embedding.method
    provenance["layer"] = embedding.layer
    return CorrelationTable(results=results, provenance=provenance)


@dataclass
class TopRegion:
    region: int
    r: float
    p_value: float
    component: int
    class_label: str


def top_regions(table: CorrelationTable, n: int = 10,
                ranking: str = "abs_r") -> list[TopRegion]:
    """Rank regions by their best |r| over all valid rows of the table.

    ranking "significant_only" restricts to rows with p < 0.05 before the
    max-|r| reduction; regions with no qualifying row drop out. Ties are
    broken in favor of the lower region id.
    """
    if ranking not in ("abs_r", "significant_only"):
        raise ConfigError(f"unknown ranking {ranking!r}")
    if not table.results:
        raise DegenerateInputError("cannot rank an empty correlation table")
    best: dict[int, CorrelationResult] = {}
    for res in table.valid_results():
        if ranking == "significant_only" and not res.p_value < 0.05:
            continue
        cur = best.get(res.region)
        if cur is None or abs(res.r) > abs(cur.r):
            best[res.region] = res
    ordered = sorted(best.values(), key=lambda res: (-abs(res.r), res.region))
    return [TopRegion(region=res.region, r=res.r, p_value=res.p_value,
                      component=res.component, class_label=res.class_label)
            for res in ordered[:n]]


@dataclass
class OverlapReport:
    pair_overlaps: dict  # (comparison_a, comparison_b) -> sorted region list
    recurring_regions: list[int]  # regions present in >= 3 pairwise overlaps


def overlap_report(top_lists: dict) -> OverlapReport:
    """Intersect per-comparison top-N region sets pairwise.

    top_lists maps comparison name to either a list of TopRegion entries or a
    plain list of region ids. Regions appearing in at least 3 of the pairwise
    overlaps are reported as recurring.
    """
    if len(top_lists) < 2:
        raise ConfigError("overlap report needs at least 2 comparisons")
    sets = {}
    for name, entries in top_lists.items():
        regions = [e.region if isinstance(e, TopRegion) else int(e) for e in entries]
        sets[name] = set(regions)
    names = sorted(sets)
    pair_overlaps = {}
    counts: dict[int, int] = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            common = sorted(sets[a] & sets[b])
            pair_overlaps[(a, b)] = common
            for region in common:
                counts[region] = counts.get(region, 0) + 1
    recurring = sorted(region for region, c in counts.items() if c >= 3)
    return OverlapReport(pair_overlaps=pair_overlaps, recurring_regions=recurring)
