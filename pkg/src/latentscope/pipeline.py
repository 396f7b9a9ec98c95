"""Staged pipeline: phantom generation through the final report directory.

Each stage writes its artifacts plus a stage.stamp recording the producing
config hash; downstream stages refuse to run on missing or hash-mismatched
predecessors unless forced. All randomness is derived from the single global
seed via context hashing, and no artifact embeds a timestamp or absolute
path, so a full rerun with the same config is byte-identical.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from .attribution import attribute_class, build_shap_volume, total_reconstruction_error
from .autoencoder import TrainConfig, extract_activations, load_model, save_model, train
from .config import PipelineConfig, config_hash, canonical_lines, parse_comparison
from .data import CLASS_NAMES, Cohort, balanced_subset, build_region_profiles
from .embedding import EmbeddingMatrix, embed_once
from .errors import DependencyError
from .fileio import (fmt_value, load_cohort, read_csv, save_cohort, save_volume,
                     write_csv)
from .lrcp import LRCPGrid, accuracy_map, lrcp_grid, summary_counts
from .regionstats import correlate_embedding_regions, overlap_report, top_regions
from .seeds import derive_seed
from .validation import correct_table

STAGES = ("generate", "train", "embed", "correlate", "shap", "lrcp", "report")

STAGE_DEPS = {
    "generate": (),
    "train": ("generate",),
    "embed": ("generate", "train"),
    "correlate": ("generate", "embed"),
    "shap": ("generate", "train"),
    "lrcp": ("generate", "embed"),
    "report": ("generate", "correlate", "shap", "lrcp"),
}


@contextmanager
def pipeline_lock(out_dir):
    """Exclusive ownership of an output directory for the duration of a stage."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = out / "lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DependencyError(
            f"output directory {out} is locked by another run "
            f"(remove {lock} if that run is dead)") from None
    os.write(fd, b"latentscope\n")
    os.close(fd)
    try:
        yield out
    finally:
        lock.unlink(missing_ok=True)


def _stamp_path(out: Path, stage: str) -> Path:
    return out / stage / "stage.stamp"


def _write_stamp(out: Path, stage: str, config: PipelineConfig) -> None:
    path = _stamp_path(out, stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(f"stage={stage}\nconfig_hash={config_hash(config)}\n",
                    encoding="utf-8")


def _read_stamp_hash(out: Path, stage: str) -> str | None:
    path = _stamp_path(out, stage)
    if not path.exists():
        return None
    for line in path.read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        if key == "config_hash":
            return value
    return None


def require_stages(out: Path, stage: str, config: PipelineConfig,
                   force: bool = False) -> None:
    """Refuse to run `stage` unless every predecessor ran under this config."""
    want = config_hash(config)
    for dep in STAGE_DEPS[stage]:
        have = _read_stamp_hash(out, dep)
        if have is None:
            raise DependencyError(
                f"stage {stage!r} needs stage {dep!r}, which has not run in "
                f"{out}; run it first")
        if have != want and not force:
            raise DependencyError(
                f"stage {dep!r} in {out} was produced under config hash "
                f"{have[:12]}..., but the current config hashes to "
                f"{want[:12]}...; rerun {dep!r} (or pass --stage-force to "
                "use the stale artifacts anyway)")


def _hash_comment(config: PipelineConfig) -> list[str]:
    return [f"config_hash={config_hash(config)}"]


def _comparison_classes(config: PipelineConfig) -> dict[str, tuple[int, int]]:
    return {name: parse_comparison(name) for name in config.comparisons}


def _comparison_subset(cohort: Cohort, name: str, pair, seed: int) -> Cohort:
    return balanced_subset(cohort, list(pair), seed=derive_seed(seed, "subset", name))


# ---------------------------------------------------------------------------
# stages

def run_generate(config: PipelineConfig, out_dir) -> Path:
    from .phantom import generate_phantom_cohort

    config.validate()
    with pipeline_lock(out_dir) as out:
        phantom = replace(config.phantom, seed=derive_seed(config.seed, "phantom"))
        cohort = generate_phantom_cohort(phantom)
        stage = out / "generate"
        stage.mkdir(parents=True, exist_ok=True)
        save_cohort(str(stage / "cohort"), cohort)
        write_csv(str(stage / "classes.csv"), ["class", "count"],
                  [{"class": CLASS_NAMES[k], "count": v}
                   for k, v in sorted(cohort.class_counts().items())],
                  comments=_hash_comment(config))
        _write_stamp(out, "generate", config)
        (out / "config.txt").write_text(
            "\n".join(canonical_lines(config)) + "\n", encoding="utf-8")
    return out / "generate"


def _load_cohort(out: Path) -> Cohort:
    return load_cohort(str(out / "generate" / "cohort"))


def run_train(config: PipelineConfig, out_dir, force: bool = False) -> Path:
    config.validate()
    with pipeline_lock(out_dir) as out:
        require_stages(out, "train", config, force)
        cohort = _load_cohort(out)
        stage = out / "train"
        for name, pair in _comparison_classes(config).items():
            subset = _comparison_subset(cohort, name, pair, config.seed)
            tc: TrainConfig = replace(
                config.train, seed=derive_seed(config.seed, "train", name))
            model, report = train(subset, tc)
            comp_dir = stage / name
            comp_dir.mkdir(parents=True, exist_ok=True)
            save_model(model, str(comp_dir / "model.lsae"))
            write_csv(str(comp_dir / "training_log.csv"), ["epoch", "loss"],
                      [{"epoch": i + 1, "loss": loss}
                       for i, loss in enumerate(report.epoch_losses)],
                      comments=_hash_comment(config) + [
                          f"best_epoch={report.best_epoch}",
                          f"stopped_epoch={report.stopped_epoch}",
                          f"params_sha256={report.params_sha256}",
                      ])
        _write_stamp(out, "train", config)
    return out / "train"


def _scalar_metadata(metadata: dict) -> list[str]:
    lines = []
    for key in sorted(metadata):
        value = metadata[key]
        if isinstance(value, (list, tuple, np.ndarray)):
            if key == "notes":
                lines.append(f"notes={';'.join(str(v) for v in value)}")
            continue
        lines.append(f"{key}={fmt_value(value)}")
    return lines


def run_embed(config: PipelineConfig, out_dir, force: bool = False) -> Path:
    config.validate()
    with pipeline_lock(out_dir) as out:
        require_stages(out, "embed", config, force)
        cohort = _load_cohort(out)
        stage = out / "embed"
        hyper = {
            "tsne": {"perplexity": config.embed.perplexity,
                     "iters": config.embed.tsne_iters},
            "umap": {"n_neighbors": config.embed.n_neighbors,
                     "min_dist": config.embed.min_dist,
                     "epochs": config.embed.umap_epochs},
        }
        for name, pair in _comparison_classes(config).items():
            subset = _comparison_subset(cohort, name, pair, config.seed)
            model = load_model(str(out / "train" / name / "model.lsae"))
            acts = extract_activations(model, subset,
                                       batch_size=config.train.batch_size)
            labels = subset.class_labels
            comp_dir = stage / name
            comp_dir.mkdir(parents=True, exist_ok=True)
            for layer in config.embed.layers:
                x = acts.matrix(layer)
                for method in config.embed.methods:
                    emb = embed_once(
                        x, method,
                        seed=derive_seed(config.seed, "embed", name, method, layer),
                        labels=labels if method == "pls" else None,
                        subject_ids=subset.subject_ids, layer=layer,
                        dims=config.embed.components,
                        **hyper.get(method, {}))
                    base = comp_dir / f"{method}_{layer}"
                    cols = [f"d{i}" for i in range(emb.n_components)]
                    write_csv(str(base.with_suffix(".csv")),
                              ["subject_id", "method", "layer"] + cols,
                              [dict({"subject_id": sid, "method": method,
                                     "layer": layer},
                                    **{c: emb.values[i, j]
                                       for j, c in enumerate(cols)})
                               for i, sid in enumerate(emb.subject_ids)],
                              comments=_hash_comment(config))
                    meta = _scalar_metadata(emb.metadata)
                    base.with_suffix(".meta").write_text(
                        "\n".join(meta) + "\n", encoding="utf-8")
        _write_stamp(out, "embed", config)
    return out / "embed"


def _load_embedding(path: Path, method: str, layer: str) -> EmbeddingMatrix:
    rows = read_csv(str(path))
    if not rows:
        raise DependencyError(f"embedding file {path} is empty")
    cols = sorted(k for k in rows[0] if k.startswith("d") and k[1:].isdigit())
    values = np.array([[float(row[c]) for c in cols] for row in rows])
    ids = [row["subject_id"] for row in rows]
    meta_path = path.with_suffix(".meta")
    metadata = {}
    if meta_path.exists():
        for line in meta_path.read_text(encoding="utf-8").splitlines():
            key, sep, value = line.partition("=")
            if sep:
                metadata[key] = value
    return EmbeddingMatrix(method=method, layer=layer, values=values,
                           subject_ids=ids, metadata=metadata)


def _load_all_embeddings(out: Path, config: PipelineConfig) -> dict:
    embeddings = {}
    for name in config.comparisons:
        for method in config.embed.methods:
            for layer in config.embed.layers:
                path = out / "embed" / name / f"{method}_{layer}.csv"
                if not path.exists():
                    raise DependencyError(
                        f"missing embedding artifact {path}; rerun the embed stage")
                embeddings[(name, method, layer)] = _load_embedding(path, method, layer)
    return embeddings


def _correlation_rows(table):
    for res in table.results:
        yield {"method": res.method, "layer": res.layer,
               "component": res.component, "region": res.region,
               "class": res.class_label, "n": res.n, "r": res.r,
               "r2": res.r_squared, "p": res.p_value, "flag": res.flag}


def run_correlate(config: PipelineConfig, out_dir, force: bool = False) -> Path:
    config.validate()
    with pipeline_lock(out_dir) as out:
        require_stages(out, "correlate", config, force)
        cohort = _load_cohort(out)
        embeddings = _load_all_embeddings(out, config)
        stage = out / "correlate"
        overlap_method = "tsne" if "tsne" in config.embed.methods else config.embed.methods[0]
        overlap_layer = config.embed.layers[-1]
        per_comparison_top = {}
        for name, pair in _comparison_classes(config).items():
            subset = _comparison_subset(cohort, name, pair, config.seed)
            profiles = build_region_profiles(subset)
            labels = subset.class_labels
            comp_dir = stage / name
            comp_dir.mkdir(parents=True, exist_ok=True)
            all_rows, top_rows = [], []
            kept_p_rows, kept_sar_rows = [], []
            for method in config.embed.methods:
                for layer in config.embed.layers:
                    emb = embeddings[(name, method, layer)]
                    table = correlate_embedding_regions(
                        emb, profiles, labels=labels, stratify=config.stratify)
                    all_rows.extend(_correlation_rows(table))
                    ranked = top_regions(table, n=config.top_n)
                    top_rows.extend(
                        {"method": method, "layer": layer, "rank": i + 1,
                         "region": t.region, "r": t.r, "p": t.p_value,
                         "component": t.component, "class": t.class_label}
                        for i, t in enumerate(ranked))
                    kept_p_rows.extend(_correlation_rows(
                        correct_table(table, "pvalue", delta=config.bound.delta)))
                    kept_sar_rows.extend(_correlation_rows(
                        correct_table(table, "sar", delta=config.bound.delta)))
                    if method == overlap_method and layer == overlap_layer:
                        per_comparison_top[name] = ranked
            comments = _hash_comment(config)
            write_csv(str(comp_dir / "correlations.csv"),
                      ["method", "layer", "component", "region", "class", "n",
                       "r", "r2", "p", "flag"], all_rows, comments=comments)
            write_csv(str(comp_dir / "top_regions.csv"),
                      ["method", "layer", "rank", "region", "r", "p",
                       "component", "class"], top_rows, comments=comments)
            write_csv(str(comp_dir / "corrected_pvalue.csv"),
                      ["method", "layer", "component", "region", "class", "n",
                       "r", "r2", "p", "flag"], kept_p_rows, comments=comments)
            write_csv(str(comp_dir / "corrected_sar.csv"),
                      ["method", "layer", "component", "region", "class", "n",
                       "r", "r2", "p", "flag"], kept_sar_rows, comments=comments)
        overlap_rows = []
        if len(per_comparison_top) >= 2:
            report = overlap_report(per_comparison_top)
            for (a, b), regions in sorted(report.pair_overlaps.items()):
                overlap_rows.extend(
                    {"comparison_a": a, "comparison_b": b, "region": region}
                    for region in regions)
        write_csv(str(stage / "overlap.csv"),
                  ["comparison_a", "comparison_b", "region"], overlap_rows,
                  comments=_hash_comment(config) + [
                      f"method={overlap_method}", f"layer={overlap_layer}"])
        _write_stamp(out, "correlate", config)
    return out / "correlate"


def run_shap(config: PipelineConfig, out_dir, force: bool = False) -> Path:
    config.validate()
    with pipeline_lock(out_dir) as out:
        require_stages(out, "shap", config, force)
        cohort = _load_cohort(out)
        stage = out / "shap"
        for name, pair in _comparison_classes(config).items():
            subset = _comparison_subset(cohort, name, pair, config.seed)
            model = load_model(str(out / "train" / name / "model.lsae"))
            errors = total_reconstruction_error(subset, model,
                                                chunk=config.train.batch_size)
            profiles = build_region_profiles(subset)
            labels = np.asarray(subset.class_labels)
            ids = np.asarray(profiles.subject_ids)
            comp_dir = stage / name
            comp_dir.mkdir(parents=True, exist_ok=True)
            phi_rows, importance_rows = [], []
            for label in pair:
                mask = labels == label
                class_ids = [str(s) for s in ids[mask]]
                targets = np.array([errors[sid] for sid in class_ids])
                fc = replace(config.forest,
                             seed=derive_seed(config.seed, "shap", name, label))
                result = attribute_class(profiles.values[mask], targets, label,
                                         config=fc, subject_ids=class_ids)
                class_name = CLASS_NAMES[label]
                for i, sid in enumerate(result.subject_ids):
                    phi_rows.extend(
                        {"class": class_name, "subject_id": sid,
                         "region": int(region), "phi": result.phi[i, j]}
                        for j, region in enumerate(profiles.region_ids))
                importance_rows.extend(
                    {"class": class_name, "region": int(region),
                     "s_r": result.s[j], "s_tilde": result.s_tilde[j]}
                    for j, region in enumerate(profiles.region_ids))
                save_volume(build_shap_volume(result.s_tilde, cohort.atlas),
                            str(comp_dir / f"map_{class_name}.vol"))
            comments = _hash_comment(config)
            write_csv(str(comp_dir / "shap_values.csv"),
                      ["class", "subject_id", "region", "phi"], phi_rows,
                      comments=comments)
            write_csv(str(comp_dir / "importance.csv"),
                      ["class", "region", "s_r", "s_tilde"], importance_rows,
                      comments=comments)
        _write_stamp(out, "shap", config)
    return out / "shap"


def _grid_rows(grid: LRCPGrid):
    for cell in grid.cells:
        yield {"comparison": cell.comparison, "method": cell.method,
               "layer": cell.layer, "component": cell.component,
               "region": cell.region, "n": cell.n, "r": cell.r,
               "p": cell.p_value, "emp_error": cell.empirical_error,
               "corr_error": cell.corrected_error, "category": cell.category}


def _summary_rows(grid: LRCPGrid):
    for (name, method, layer, component), (sig, nonsig) in summary_counts(grid).items():
        yield {"comparison": name, "method": method, "layer": layer,
               "component": component, "significant": sig,
               "non_significant": nonsig}


def run_lrcp(config: PipelineConfig, out_dir, force: bool = False) -> Path:
    config.validate()
    with pipeline_lock(out_dir) as out:
        require_stages(out, "lrcp", config, force)
        cohort = _load_cohort(out)
        embeddings = _load_all_embeddings(out, config)
        profiles = build_region_profiles(cohort)
        labels = cohort.class_labels
        comparisons = [(name, parse_comparison(name)) for name in config.comparisons]
        grid = lrcp_grid(embeddings, profiles, labels, comparisons,
                         bound=config.bound,
                         seed=derive_seed(config.seed, "lrcp"),
                         quadratic=config.quadratic)
        stage = out / "lrcp"
        maps_dir = stage / "maps"
        maps_dir.mkdir(parents=True, exist_ok=True)
        comments = _hash_comment(config)
        write_csv(str(stage / "grid.csv"),
                  ["comparison", "method", "layer", "component", "region", "n",
                   "r", "p", "emp_error", "corr_error", "category"],
                  _grid_rows(grid), comments=comments)
        write_csv(str(stage / "summary.csv"),
                  ["comparison", "method", "layer", "component", "significant",
                   "non_significant"], _summary_rows(grid), comments=comments)
        for name in grid.comparisons:
            for method in grid.methods:
                for layer in grid.layers:
                    for component in grid.components:
                        vol = accuracy_map(grid, name, method, layer, component,
                                           cohort.atlas)
                        save_volume(vol, str(
                            maps_dir / f"{name}_{method}_{layer}_D{component}.vol"))
        _write_stamp(out, "lrcp", config)
    return out / "lrcp"


def run_report(config: PipelineConfig, out_dir, force: bool = False) -> Path:
    config.validate()
    with pipeline_lock(out_dir) as out:
        require_stages(out, "report", config, force)
        stage = out / "report"
        stage.mkdir(parents=True, exist_ok=True)
        comments = _hash_comment(config)

        summary_rows = read_csv(str(out / "lrcp" / "summary.csv"))
        write_csv(str(stage / "lrcp_summary.csv"),
                  ["comparison", "method", "layer", "component", "significant",
                   "non_significant"], summary_rows, comments=comments)

        top_rows = []
        for name in config.comparisons:
            for row in read_csv(str(out / "correlate" / name / "top_regions.csv")):
                top_rows.append(dict({"comparison": name}, **row))
        write_csv(str(stage / "top_regions.csv"),
                  ["comparison", "method", "layer", "rank", "region", "r", "p",
                   "component", "class"], top_rows, comments=comments)

        overlap_rows = read_csv(str(out / "correlate" / "overlap.csv"))
        write_csv(str(stage / "overlap.csv"),
                  ["comparison_a", "comparison_b", "region"], overlap_rows,
                  comments=comments)

        importance_rows = []
        for name in config.comparisons:
            for row in read_csv(str(out / "shap" / name / "importance.csv")):
                importance_rows.append(dict({"comparison": name}, **row))
        write_csv(str(stage / "shap_importance.csv"),
                  ["comparison", "class", "region", "s_r", "s_tilde"],
                  importance_rows, comments=comments)

        stamp_rows = [{"stage": dep, "config_hash": _read_stamp_hash(out, dep)}
                      for dep in STAGES if _read_stamp_hash(out, dep) is not None]
        write_csv(str(stage / "provenance.csv"), ["stage", "config_hash"],
                  stamp_rows, comments=comments)
        _write_stamp(out, "report", config)
    return out / "report"


STAGE_RUNNERS = {
    "generate": run_generate,
    "train": run_train,
    "embed": run_embed,
    "correlate": run_correlate,
    "shap": run_shap,
    "lrcp": run_lrcp,
    "report": run_report,
}


def run_all(config: PipelineConfig, out_dir, force: bool = False) -> Path:
    run_generate(config, out_dir)
    for stage in STAGES[1:]:
        STAGE_RUNNERS[stage](config, out_dir, force=force)
    return Path(out_dir)
