"""Pipeline configuration: flat key=value files with section prefixes.

The format is intentionally line-based and diffable; parsing is strict
(unknown keys are errors) and serialization is canonical, so the sha256 of
the canonical form identifies a configuration exactly. That hash is stamped
into every stage's artifacts for staleness checks.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

from .autoencoder import TrainConfig
from .data import CLASS_IDS, CLASS_NAMES
from .errors import ConfigError
from .forest import ForestConfig
from .phantom import PhantomConfig
from .validation import BoundConfig

EMBED_METHODS = ("pca", "pls", "tsne", "umap")


@dataclass
class EmbedConfig:
    methods: tuple[str, ...] = ("pca", "pls", "tsne", "umap")
    layers: tuple[str, ...] = ("L3",)
    components: int = 3
    perplexity: float = 30.0
    tsne_iters: int = 1000
    n_neighbors: int = 15
    min_dist: float = 0.1
    umap_epochs: int = 500

    def validate(self) -> None:
        for m in self.methods:
            if m not in EMBED_METHODS:
                raise ConfigError(f"unknown embedding method {m!r}")
        if not self.methods:
            raise ConfigError("at least one embedding method required")
        if not self.layers:
            raise ConfigError("at least one layer required")
        for layer in self.layers:
            if not (layer.startswith("L") and layer[1:].isdigit()):
                raise ConfigError(f"bad layer name {layer!r} (expected L1, L2, ...)")
        if self.components < 1:
            raise ConfigError("components must be >= 1")


@dataclass
class PipelineConfig:
    phantom: PhantomConfig = field(default_factory=lambda: PhantomConfig(
        class_counts={0: 229, 1: 252, 2: 149, 3: 188}))
    train: TrainConfig = field(default_factory=TrainConfig)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    bound: BoundConfig = field(default_factory=BoundConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    comparisons: tuple[str, ...] = ("NOR_AD", "NOR_MCI", "NOR_MCIc")
    top_n: int = 10
    stratify: bool = True
    quadratic: bool = False
    seed: int = 0
    out_dir: str = "runs/phantom"

    def validate(self) -> None:
        self.phantom.validate()
        self.train.validate()
        self.embed.validate()
        self.bound.validate()
        self.forest.validate()
        if self.top_n < 1:
            raise ConfigError("top_n must be >= 1")
        if not self.comparisons:
            raise ConfigError("at least one comparison required")
        for name in self.comparisons:
            pair = parse_comparison(name)
            for label in pair:
                if self.phantom.class_counts.get(label, 0) <= 0:
                    raise ConfigError(
                        f"comparison {name!r} references class "
                        f"{CLASS_NAMES[label]} absent from the phantom config")


def parse_comparison(name: str) -> tuple[int, int]:
    """NOR_AD -> (0, 3). Only binary comparisons are supported."""
    parts = name.split("_")
    labels = []
    for part in parts:
        if part not in CLASS_IDS:
            raise ConfigError(f"unknown class {part!r} in comparison {name!r}")
        labels.append(CLASS_IDS[part])
    if len(labels) != 2:
        raise ConfigError(
            f"comparison {name!r} must name exactly two classes; "
            "multi-class groupings are not supported")
    if labels[0] == labels[1]:
        raise ConfigError(f"comparison {name!r} repeats a class")
    return (labels[0], labels[1])


def _parse_bool(value: str, key: str) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise ConfigError(f"{key} must be true or false, got {value!r}")


def _parse_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


def _parse_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}") from None


def _parse_class_counts(value: str, key: str) -> dict[int, int]:
    counts: dict[int, int] = {}
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, num = item.partition(":")
        if name not in CLASS_IDS:
            raise ConfigError(f"{key}: unknown class {name!r}")
        counts[CLASS_IDS[name]] = _parse_int(num, key)
    if not counts:
        raise ConfigError(f"{key} must name at least one class")
    return counts


def _parse_effects(value: str, key: str) -> list[tuple[int, int, float]]:
    effects = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        fields = item.split(":")
        if len(fields) != 3:
            raise ConfigError(f"{key}: expected region:class:shift, got {item!r}")
        region = _parse_int(fields[0], key)
        if fields[1] not in CLASS_IDS:
            raise ConfigError(f"{key}: unknown class {fields[1]!r}")
        effects.append((region, CLASS_IDS[fields[1]], _parse_float(fields[2], key)))
    return effects


def _fmt_counts(counts: dict[int, int]) -> str:
    return ",".join(f"{CLASS_NAMES[k]}:{counts[k]}" for k in sorted(counts))


def _fmt_effects(effects) -> str:
    return ",".join(f"{r}:{CLASS_NAMES[c]}:{float(s)!r}" for r, c, s in effects)


def canonical_lines(config: PipelineConfig) -> list[str]:
    """Deterministic serialization of everything that affects computation.

    The output directory is deliberately excluded: it is a runtime location,
    not configuration, and hashing it would make runs in different
    directories look like different experiments.
    """
    p, t, e, b, f = (config.phantom, config.train, config.embed, config.bound,
                     config.forest)
    return [
        f"seed={config.seed}",
        f"comparisons={','.join(config.comparisons)}",
        f"phantom.dims={p.dims[0]},{p.dims[1]},{p.dims[2]}",
        f"phantom.region_count={p.region_count}",
        f"phantom.class_counts={_fmt_counts(p.class_counts)}",
        f"phantom.effects={_fmt_effects(p.effect_spec)}",
        f"phantom.noise_sigma={float(p.noise_sigma)!r}",
        f"phantom.smoothness={float(p.smoothness)!r}",
        f"phantom.template_range={float(p.template_range[0])!r},{float(p.template_range[1])!r}",
        f"train.loss={t.loss_kind}",
        f"train.alpha={float(t.alpha)!r}",
        f"train.lr={float(t.lr)!r}",
        f"train.max_epochs={t.max_epochs}",
        f"train.patience={t.patience}",
        f"train.batch_size={t.batch_size}",
        f"embed.methods={','.join(e.methods)}",
        f"embed.layers={','.join(e.layers)}",
        f"embed.components={e.components}",
        f"embed.perplexity={float(e.perplexity)!r}",
        f"embed.tsne_iters={e.tsne_iters}",
        f"embed.n_neighbors={e.n_neighbors}",
        f"embed.min_dist={float(e.min_dist)!r}",
        f"embed.umap_epochs={e.umap_epochs}",
        f"bound.delta={float(b.delta)!r}",
        f"bound.eta={float(b.eta)!r}",
        f"bound.complexity={float(b.complexity)!r}",
        f"shap.n_trees={f.n_trees}",
        f"shap.max_depth={f.max_depth}",
        f"shap.min_leaf={f.min_leaf}",
        f"correlate.top_n={config.top_n}",
        f"correlate.stratify={'true' if config.stratify else 'false'}",
        f"lrcp.quadratic={'true' if config.quadratic else 'false'}",
    ]


def config_hash(config: PipelineConfig) -> str:
    text = "\n".join(canonical_lines(config)) + "\n"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_config(config: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(canonical_lines(config)) + "\n")


def parse_config_text(text: str) -> PipelineConfig:
    config = PipelineConfig()
    phantom = config.phantom
    train = config.train
    embed = config.embed
    bound = config.bound
    forest = config.forest
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {raw!r}")
        key = key.strip()
        value = value.strip()
        if key == "seed":
            config.seed = _parse_int(value, key)
        elif key == "out":
            config.out_dir = value
        elif key == "comparisons":
            config.comparisons = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "phantom.dims":
            parts = [_parse_int(v, key) for v in value.split(",")]
            if len(parts) != 3:
                raise ConfigError(f"{key} needs three integers, got {value!r}")
            phantom = replace(phantom, dims=tuple(parts))
        elif key == "phantom.region_count":
            phantom = replace(phantom, region_count=_parse_int(value, key))
        elif key == "phantom.class_counts":
            phantom = replace(phantom, class_counts=_parse_class_counts(value, key))
        elif key == "phantom.effects":
            phantom = replace(phantom, effect_spec=_parse_effects(value, key))
        elif key == "phantom.noise_sigma":
            phantom = replace(phantom, noise_sigma=_parse_float(value, key))
        elif key == "phantom.smoothness":
            phantom = replace(phantom, smoothness=_parse_float(value, key))
        elif key == "phantom.template_range":
            parts = [_parse_float(v, key) for v in value.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"{key} needs two numbers, got {value!r}")
            phantom = replace(phantom, template_range=tuple(parts))
        elif key == "train.loss":
            train = replace(train, loss_kind=value)
        elif key == "train.alpha":
            train = replace(train, alpha=_parse_float(value, key))
        elif key == "train.lr":
            train = replace(train, lr=_parse_float(value, key))
        elif key == "train.max_epochs":
            train = replace(train, max_epochs=_parse_int(value, key))
        elif key == "train.patience":
            train = replace(train, patience=_parse_int(value, key))
        elif key == "train.batch_size":
            train = replace(train, batch_size=_parse_int(value, key))
        elif key == "embed.methods":
            embed = replace(embed, methods=tuple(
                v.strip() for v in value.split(",") if v.strip()))
        elif key == "embed.layers":
            embed = replace(embed, layers=tuple(
                v.strip() for v in value.split(",") if v.strip()))
        elif key == "embed.components":
            embed = replace(embed, components=_parse_int(value, key))
        elif key == "embed.perplexity":
            embed = replace(embed, perplexity=_parse_float(value, key))
        elif key == "embed.tsne_iters":
            embed = replace(embed, tsne_iters=_parse_int(value, key))
        elif key == "embed.n_neighbors":
            embed = replace(embed, n_neighbors=_parse_int(value, key))
        elif key == "embed.min_dist":
            embed = replace(embed, min_dist=_parse_float(value, key))
        elif key == "embed.umap_epochs":
            embed = replace(embed, umap_epochs=_parse_int(value, key))
        elif key == "bound.delta":
            bound = replace(bound, delta=_parse_float(value, key))
        elif key == "bound.eta":
            bound = replace(bound, eta=_parse_float(value, key))
        elif key == "bound.complexity":
            bound = replace(bound, complexity=_parse_float(value, key))
        elif key == "shap.n_trees":
            forest = replace(forest, n_trees=_parse_int(value, key))
        elif key == "shap.max_depth":
            forest = replace(forest, max_depth=_parse_int(value, key))
        elif key == "shap.min_leaf":
            forest = replace(forest, min_leaf=_parse_int(value, key))
        elif key == "correlate.top_n":
            config.top_n = _parse_int(value, key)
        elif key == "correlate.stratify":
            config.stratify = _parse_bool(value, key)
        elif key == "lrcp.quadratic":
            config.quadratic = _parse_bool(value, key)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    config.phantom = phantom
    config.train = train
    config.embed = embed
    config.bound = bound
    config.forest = forest
    config.validate()
    return config


def load_config(path) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text)
