"""Latent-Regional Correlation Profiling.

Every (comparison, method, layer, component, region) cell gets two verdicts:
a pooled Pearson correlation with exact p-value, and a bound-corrected
resubstitution error of a least-squares classifier on the two features
(component value, region value). The four-way category crosses the verdicts;
summary counts follow the classification branch alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AtlasMap, CLASS_NAMES, RegionProfileMatrix, Volume
from .errors import ConfigError, DegenerateInputError, DependencyError, ShapeError
from .regionstats import pearson, pearson_pvalue
from .seeds import derive_seed
from .validation import BoundConfig, pac_bayes_penalty

CATEGORIES = ("both", "corr_only", "class_only", "neither")


@dataclass
class LRCPCell:
    comparison: str
    method: str
    layer: str
    component: int
    region: int
    n: int
    r: float
    p_value: float
    empirical_error: float
    corrected_error: float
    category: str
    flags: list[str] = field(default_factory=list)

    @property
    def corr_significant(self) -> bool:
        return self.p_value < 0.05

    @property
    def class_significant(self) -> bool:
        return self.corrected_error < 0.5


@dataclass
class LRCPGrid:
    cells: list[LRCPCell]
    comparisons: list[str]
    methods: list[str]
    layers: list[str]
    components: list[int]
    region_ids: list[int]
    provenance: dict = field(default_factory=dict)

    def slice(self, comparison=None, method=None, layer=None, component=None):
        out = self.cells
        if comparison is not None:
            out = [c for c in out if c.comparison == comparison]
        if method is not None:
            out = [c for c in out if c.method == method]
        if layer is not None:
            out = [c for c in out if c.layer == layer]
        if component is not None:
            out = [c for c in out if c.component == component]
        return out


def _classify(features: np.ndarray, targets: np.ndarray) -> float:
    """Resubstitution error of a least-squares linear classifier.

    Targets are +-1; predictions take the sign of the fitted response, with
    sign(0) counted as +1 so the error is deterministic.
    """
    design = np.column_stack([features, np.ones(features.shape[0])])
    weights, *_ = np.linalg.lstsq(design, targets, rcond=None)
    scores = design @ weights
    predicted = np.where(scores >= 0.0, 1.0, -1.0)
    return float(np.mean(predicted != targets))


def lrcp_cell(component_values, region_values, labels, bound: BoundConfig | None = None,
              quadratic: bool = False, comparison: str = "", method: str = "",
              layer: str = "", component: int = 0, region: int = 0) -> LRCPCell:
    """Evaluate one latent-region pair for one binary comparison.

    labels must contain exactly two distinct values, each with at least 5
    subjects. The classification penalty uses the parameter count of the
    fitted model: 3 for the linear classifier, 4 with the product term.
    """
    bound = bound or BoundConfig()
    bound.validate()
    x = np.asarray(component_values, dtype=np.float64)
    y = np.asarray(region_values, dtype=np.float64)
    labels = np.asarray(labels)
    if x.shape != y.shape or x.ndim != 1 or labels.shape != x.shape:
        raise ShapeError("component, region and label vectors must align")
    classes = np.unique(labels)
    if classes.size != 2:
        raise ConfigError(f"LRCP cell needs exactly 2 classes, got {classes.size}")
    counts = [(labels == c).sum() for c in classes]
    if min(counts) < 5:
        raise DegenerateInputError(
            f"both classes need >= 5 subjects, got counts {counts}")
    n = x.size
    targets = np.where(labels == classes[0], -1.0, 1.0)

    flags: list[str] = []
    degenerate = x.std() == 0.0 or y.std() == 0.0
    try:
        r = pearson(x, y)
        p = pearson_pvalue(r, n)
    except DegenerateInputError:
        r, p = float("nan"), float("nan")

    features = np.column_stack([x, y])
    if quadratic:
        features = np.column_stack([features, x * y])
    emp_error = _classify(features, targets)
    parameter_count = features.shape[1] + 1
    penalty = pac_bayes_penalty(parameter_count, bound.eta, n, bound.delta)
    corrected = min(1.0, emp_error + penalty)

    if degenerate:
        category = "neither"
        flags.append("degenerate_constant_feature")
    else:
        corr_sig = p < 0.05
        class_sig = corrected < 0.5
        if corr_sig and class_sig:
            category = "both"
        elif corr_sig:
            category = "corr_only"
        elif class_sig:
            category = "class_only"
        else:
            category = "neither"
    return LRCPCell(
        comparison=comparison, method=method, layer=layer, component=component,
        region=region, n=n, r=r, p_value=p, empirical_error=emp_error,
        corrected_error=corrected, category=category, flags=flags,
    )


def _comparison_name(class_pair) -> str:
    return "_".join(CLASS_NAMES[c] for c in class_pair)


def _balanced_rows(labels: np.ndarray, class_pair, rng) -> np.ndarray:
    """Row indices restricted to the pair's classes, balanced to the minimum
    class count by seeded subsampling; original order preserved."""
    a, b = class_pair
    idx_a = np.flatnonzero(labels == a)
    idx_b = np.flatnonzero(labels == b)
    if idx_a.size == 0 or idx_b.size == 0:
        missing = a if idx_a.size == 0 else b
        raise ConfigError(
            f"comparison class {CLASS_NAMES.get(missing, missing)} absent from cohort")
    m = min(idx_a.size, idx_b.size)
    keep_a = idx_a if idx_a.size == m else np.sort(rng.choice(idx_a, size=m, replace=False))
    keep_b = idx_b if idx_b.size == m else np.sort(rng.choice(idx_b, size=m, replace=False))
    return np.sort(np.concatenate([keep_a, keep_b]))


def lrcp_grid(embeddings: dict, profiles: RegionProfileMatrix, labels,
              comparisons, bound: BoundConfig | None = None, seed: int = 0,
              quadratic: bool = False) -> LRCPGrid:
    """Build the full comparisons x methods x layers x components x regions grid.

    embeddings maps (method, layer) or (comparison_name, method, layer) to an
    EmbeddingMatrix; the comparison-specific key wins, so per-comparison fits
    and pooled fits both work. Embedding rows are matched to profile rows by
    subject id, then balanced-subset per comparison with a seed derived from
    (seed, comparison, method, layer).

    comparisons is a list of (name, (class_a, class_b)) pairs or bare class
    pairs; only binary comparisons are supported.
    """
    bound = bound or BoundConfig()
    bound.validate()
    labels = np.asarray(labels)
    if labels.shape[0] != profiles.values.shape[0]:
        raise ShapeError("labels must align with profile rows")
    row_of = {sid: i for i, sid in enumerate(profiles.subject_ids)}

    named = []
    for item in comparisons:
        if isinstance(item, (tuple, list)) and len(item) == 2 and isinstance(item[0], str):
            name, pair = item
        else:
            pair = tuple(item)
            name = _comparison_name(pair)
        pair = tuple(int(c) for c in pair)
        if len(pair) != 2 or pair[0] == pair[1]:
            raise ConfigError(f"comparison {name!r} must name two distinct classes")
        named.append((name, pair))
    if not named:
        raise ConfigError("LRCP needs at least one comparison")

    methods = sorted({k[-2] for k in embeddings})
    layers = sorted({k[-1] for k in embeddings})
    n_components = min(e.n_components for e in embeddings.values())
    components = list(range(n_components))
    region_ids = [int(r) for r in profiles.region_ids]

    cells: list[LRCPCell] = []
    for name, pair in named:
        for method in methods:
            for layer in layers:
                emb = embeddings.get((name, method, layer))
                if emb is None:
                    emb = embeddings.get((method, layer))
                if emb is None:
                    raise DependencyError(
                        f"no embedding for comparison {name!r}, method {method!r}, "
                        f"layer {layer!r}")
                try:
                    emb_rows = np.array([row_of[sid] for sid in emb.subject_ids])
                except KeyError as exc:
                    raise ShapeError(
                        f"embedding subject {exc.args[0]!r} missing from profiles")
                sub_labels = labels[emb_rows]
                rng = np.random.default_rng(derive_seed(seed, name, method, layer))
                keep = _balanced_rows(sub_labels, pair, rng)
                counts = [(sub_labels[keep] == c).sum() for c in pair]
                if min(counts) < 5:
                    raise DegenerateInputError(
                        f"comparison {name!r} has class counts {counts}; "
                        "both classes need >= 5 subjects")
                cell_labels = sub_labels[keep]
                emb_values = emb.values[keep]
                prof_values = profiles.values[emb_rows][keep]
                for component in components:
                    for j, region in enumerate(region_ids):
                        cells.append(lrcp_cell(
                            emb_values[:, component], prof_values[:, j],
                            cell_labels, bound=bound, quadratic=quadratic,
                            comparison=name, method=method, layer=layer,
                            component=component, region=region))
    provenance = {
        "seed": seed,
        "quadratic": quadratic,
        "delta": bound.delta,
        "eta": bound.eta,
    }
    return LRCPGrid(
        cells=cells,
        comparisons=[name for name, _ in named],
        methods=methods,
        layers=layers,
        components=components,
        region_ids=region_ids,
        provenance=provenance,
    )


def summary_counts(grid: LRCPGrid) -> dict:
    """Significant / non-significant region counts per grid slice.

    Keyed by (comparison, method, layer, component); significance follows
    the classification branch (corrected error < 0.5). Counts always sum to
    the region count.
    """
    out = {}
    for comparison in grid.comparisons:
        for method in grid.methods:
            for layer in grid.layers:
                for component in grid.components:
                    cells = grid.slice(comparison, method, layer, component)
                    sig = sum(1 for c in cells if c.class_significant)
                    out[(comparison, method, layer, component)] = (sig, len(cells) - sig)
    return out


def accuracy_map(grid: LRCPGrid, comparison: str, method: str, layer: str,
                 component: int, atlas: AtlasMap) -> Volume:
    """Paint per-region corrected accuracy (1 - corrected error) as a volume."""
    cells = grid.slice(comparison, method, layer, component)
    if not cells:
        raise ConfigError(
            f"grid has no cells for ({comparison!r}, {method!r}, {layer!r}, "
            f"component {component})")
    by_region = {c.region: c for c in cells}
    if sorted(by_region) != list(range(1, atlas.region_count + 1)):
        raise ShapeError(
            f"grid regions {sorted(by_region)[:5]}... do not match atlas with "
            f"{atlas.region_count} regions")
    lookup = np.zeros(atlas.region_count + 1)
    for region, cell in by_region.items():
        lookup[region] = min(1.0, max(0.0, 1.0 - cell.corrected_error))
    return Volume(lookup[atlas.labels].astype(np.float32))
