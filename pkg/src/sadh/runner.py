"""Two-stage pipeline, ablation suite and margin sweep.

A run directory holds::

    config.ini          full config echo (reloadable)
    manifest.json       config, versions, seeds, per-epoch losses, stage status
    semantic.npz        label-network checkpoint
    dictionary.csv      semantic dictionaries
    image.npz           feature-network checkpoint
    summary.json        MAP and counts
    pr_curve.csv        point,recall,precision
    topk.csv            k,precision
"""

from __future__ import annotations

import csv
import json
import logging
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_dict, dump_config
from .data import MultiLabelDataset, SplitSpec, generate_synthetic, load_dataset, make_split
from .errors import SadhError
from .image import train_image
from .nn import MlpNetwork, load_checkpoint, save_checkpoint
from .retrieval import encode, retrieve, write_metrics
from .semantic import (
    SemanticDictionary,
    build_dictionaries,
    load_dictionary,
    save_dictionary,
    train_semantic,
)

log = logging.getLogger(__name__)

ABLATION_VARIANTS = ("full", "sym", "mars", "cos")


class StageError(SadhError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def versions() -> dict:
    return {"sadh": __version__, "numpy": np.__version__, "python": platform.python_version()}


def load_data(cfg: ExperimentConfig) -> MultiLabelDataset:
    d = cfg.data
    if d.source == "files":
        return load_dataset(d.features_path, d.labels_path)
    return generate_synthetic(d.n_per_class, d.n_classes, d.dim, d.multi_label_prob,
                              d.noise_sigma, d.seed)


def load_split(cfg: ExperimentConfig, ds: MultiLabelDataset) -> SplitSpec:
    s = cfg.split
    return make_split(ds, s.per_class_query, s.per_class_train, seed=s.seed,
                      train_in_database=s.train_in_database)


@dataclass
class PipelineResult:
    run_dir: Path
    map: float
    semantic_net: MlpNetwork
    dictionary: SemanticDictionary
    image_net: MlpNetwork
    summary: dict


class _Run:
    """Tracks stage progress and writes the manifest after every stage."""

    def __init__(self, cfg: ExperimentConfig, run_dir: Path, kind: str):
        self.cfg = cfg
        self.dir = run_dir
        self.manifest = {
            "kind": kind,
            "config": config_dict(cfg),
            "versions": versions(),
            "seeds": {
                "data": cfg.data.seed, "split": cfg.split.seed,
                "semantic": cfg.semantic.seed, "image": cfg.image.seed,
            },
            "image_variant": cfg.image.variant,
            "loss_name": cfg.image.loss_name,
            "stages": [],
        }
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.ini").write_text(dump_config(cfg))

    def stage(self, name: str, fn, *args, **kwargs):
        log.info("stage %s", name)
        try:
            out = fn(*args, **kwargs)
        except Exception as exc:
            self.manifest["failed_stage"] = name
            self.manifest["error"] = str(exc)
            self.write()
            raise StageError(name, exc) from exc
        self.manifest["stages"].append(name)
        self.write()
        return out

    def write(self):
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _stage_semantic(run: _Run, train_labels, stage_name="train-semantic"):
    hist: list = []
    net = run.stage(stage_name, train_semantic, train_labels, run.cfg.semantic, hist)
    run.manifest["semantic_loss"] = hist
    save_checkpoint(net, run.dir / "semantic.npz")
    return net


def _stage_dict(run: _Run, net, train_labels):
    d = run.stage("build-dict", build_dictionaries, net, train_labels)
    save_dictionary(d, run.dir / "dictionary.csv")
    run.manifest["dictionary_size"] = len(d)
    return d


def _stage_image(run: _Run, ds, split, d):
    hist: list = []
    tr = ds.subset(split.train)
    net = run.stage("train-image", train_image, tr.features, tr.labels, d, run.cfg.image, hist)
    run.manifest["image_loss"] = hist
    save_checkpoint(net, run.dir / "image.npz")
    return net


def _stage_eval(run: _Run, ds, split, net):
    def evaluate():
        db = encode(net, ds.features[split.database], ids=ds.ids[split.database],
                    labels=ds.labels[split.database])
        q = encode(net, ds.features[split.query])
        r = retrieve(q.packed, ds.labels[split.query], db, run.cfg.eval.cutoff)
        k_grid = [k for k in run.cfg.eval.topk if k <= len(db)]
        return r, write_metrics(r, run.dir, k_grid, pr_mode=run.cfg.eval.pr_mode)

    r, summary = run.stage("eval", evaluate)
    run.manifest["n_skipped_queries"] = r.n_skipped
    run.manifest["map"] = r.map
    run.write()
    return r, summary


def run_pipeline(cfg: ExperimentConfig, run_dir=None) -> PipelineResult:
    """Stage 1, dictionaries, Stage 2, encoding and evaluation, in one directory."""
    cfg.validate()
    run = _Run(cfg, Path(run_dir or cfg.output_dir), "pipeline")
    ds = run.stage("load-data", load_data, cfg)
    split = run.stage("split", load_split, cfg, ds)
    run.manifest["sizes"] = {"items": len(ds), "query": int(split.query.size),
                             "train": int(split.train.size), "database": int(split.database.size)}
    train_labels = ds.labels[split.train]
    sem = _stage_semantic(run, train_labels)
    d = _stage_dict(run, sem, train_labels)
    img = _stage_image(run, ds, split, d)
    r, summary = _stage_eval(run, ds, split, img)
    return PipelineResult(run.dir, r.map, sem, d, img, summary)


# --- single stages for the CLI ------------------------------------------------

def run_stage(cfg: ExperimentConfig, stage: str, run_dir=None) -> Path:
    """Run one stage, reading earlier stages' artifacts from ``run_dir``."""
    cfg.validate()
    run_dir = Path(run_dir or cfg.output_dir)
    manifest_path = run_dir / "manifest.json"
    run = _Run(cfg, run_dir, "stages")
    if manifest_path.exists():
        prior = json.loads(manifest_path.read_text())
        for key in ("stages", "semantic_loss", "image_loss", "dictionary_size"):
            if key in prior:
                run.manifest[key] = prior[key]
    ds = load_data(cfg)
    split = load_split(cfg, ds)
    train_labels = ds.labels[split.train]
    if stage == "train-semantic":
        _stage_semantic(run, train_labels)
    elif stage == "build-dict":
        net = run.stage("load-semantic", load_checkpoint, run_dir / "semantic.npz")
        _stage_dict(run, net, train_labels)
    elif stage == "train-image":
        d = run.stage("load-dict", load_dictionary, run_dir / "dictionary.csv")
        _stage_image(run, ds, split, d)
    elif stage == "eval":
        net = run.stage("load-image", load_checkpoint, run_dir / "image.npz")
        _stage_eval(run, ds, split, net)
    else:
        raise ValueError(f"unknown stage {stage!r}")
    return run_dir


# --- experiments -------------------------------------------------------------

def semantic_map(net: MlpNetwork, ds: MultiLabelDataset, split: SplitSpec, cutoff=None) -> float:
    """Retrieval MAP of the label network, encoding label vectors directly."""
    db = encode(net, ds.labels[split.database].astype(np.float64),
                labels=ds.labels[split.database])
    q = encode(net, ds.labels[split.query].astype(np.float64))
    return retrieve(q.packed, ds.labels[split.query], db, cutoff).map


def _image_map(cfg, ds, split, d) -> tuple[float, list]:
    tr = ds.subset(split.train)
    hist: list = []
    net = train_image(tr.features, tr.labels, d, cfg.image, hist)
    db = encode(net, ds.features[split.database], labels=ds.labels[split.database])
    q = encode(net, ds.features[split.query])
    return retrieve(q.packed, ds.labels[split.query], db, cfg.eval.cutoff).map, hist


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def run_ablation_suite(cfg: ExperimentConfig, seeds=(0,), run_dir=None) -> list[dict]:
    """MAP of the four variants, sharing data, split and Stage 1 per seed.

    Writes ``ablation.csv`` (variant, mars_margin, one column per seed, mean)
    and ``manifest.json`` with per-run loss traces and loss names.
    """
    cfg.validate()
    run_dir = Path(run_dir or cfg.output_dir)
    run = _Run(cfg, run_dir, "ablation")
    run.manifest["runs"] = []
    maps = {v: [] for v in ABLATION_VARIANTS}
    for seed in seeds:
        scfg = cfg.with_seed(seed)
        ds = load_data(scfg)
        split = load_split(scfg, ds)
        sem = run.stage(f"seed{seed}:train-semantic", train_semantic,
                        ds.labels[split.train], scfg.semantic)
        d = build_dictionaries(sem, ds.labels[split.train])
        for variant in ABLATION_VARIANTS:
            vcfg = scfg.with_variant(variant)
            m, hist = run.stage(f"seed{seed}:{variant}", _image_map, vcfg, ds, split, d)
            maps[variant].append(m)
            run.manifest["runs"].append({
                "seed": seed, "variant": variant, "mars_margin": vcfg.image.mars_margin,
                "loss_name": vcfg.image.loss_name, "map": m,
                "image_loss": [h["total"] for h in hist],
            })
    rows = []
    for v in ABLATION_VARIANTS:
        rows.append({"variant": v, "mars_margin": cfg.mars_margin if v == "mars" else None,
                     "maps": maps[v], "mean": float(np.mean(maps[v]))})
    _write_table(run_dir / "ablation.csv",
                 ["variant", "mars_margin", *[f"map_seed{s}" for s in seeds], "mean_map"],
                 [[r["variant"], "" if r["mars_margin"] is None else r["mars_margin"],
                   *r["maps"], r["mean"]] for r in rows])
    run.manifest["table"] = rows
    run.write()
    return rows


def run_margin_sweep(cfg: ExperimentConfig, margins, seeds=(0,), run_dir=None) -> list[dict]:
    """Label-network and fixed-margin feature-network MAP per margin value.

    For each margin the label network is trained with that margin and the
    feature network uses variant ``mars`` with the same constant margin.
    Writes ``margin_sweep.csv`` with seed-mean MAPs.
    """
    from .errors import ConfigError

    margins = [float(m) for m in margins]
    if not margins or any(not 0.0 <= m <= 1.0 for m in margins):
        raise ConfigError("margins must be a non-empty list within [0, 1]")
    cfg.validate()
    run_dir = Path(run_dir or cfg.output_dir)
    run = _Run(cfg, run_dir, "margin-sweep")
    run.manifest["runs"] = []
    rows = []
    for m in margins:
        sem_maps, img_maps = [], []
        for seed in seeds:
            scfg = cfg.with_seed(seed).with_variant("mars", m)
            scfg.semantic.margin = m
            scfg.validate()
            ds = load_data(scfg)
            split = load_split(scfg, ds)
            sem = run.stage(f"m{m}:seed{seed}:train-semantic", train_semantic,
                            ds.labels[split.train], scfg.semantic)
            sem_maps.append(semantic_map(sem, ds, split, scfg.eval.cutoff))
            d = build_dictionaries(sem, ds.labels[split.train])
            im, _ = run.stage(f"m{m}:seed{seed}:train-image", _image_map, scfg, ds, split, d)
            img_maps.append(im)
            run.manifest["runs"].append({"margin": m, "seed": seed,
                                         "map_semantic": sem_maps[-1], "map_image": im})
        rows.append({"margin": m, "map_semantic": float(np.mean(sem_maps)),
                     "map_image": float(np.mean(img_maps))})
    _write_table(run_dir / "margin_sweep.csv", ["margin", "map_semantic", "map_image"],
                 [[r["margin"], r["map_semantic"], r["map_image"]] for r in rows])
    run.manifest["table"] = rows
    run.write()
    return rows


def run_crossmodal(cfg: ExperimentConfig, run_dir=None) -> dict:
    """Bimodal run: synthetic text modality next to the configured features.

    Writes one checkpoint per modality (``<name>.npz``), ``crossmodal.csv``
    (query, database, map, random_baseline) and the manifest.
    """
    from dataclasses import replace

    from .crossmodal import crossmodal_eval, make_bimodal, random_ranking_map, train_crossmodal

    cfg.validate()
    run = _Run(cfg, Path(run_dir or cfg.output_dir), "crossmodal")
    ds = run.stage("load-data", load_data, cfg)
    split = run.stage("split", load_split, cfg, ds)
    bi = make_bimodal(ds, vocab=cfg.crossmodal.vocab, seed=cfg.crossmodal.seed)
    run.manifest["modalities"] = bi.names
    train_labels = ds.labels[split.train]
    sem = _stage_semantic(run, train_labels)
    d = _stage_dict(run, sem, train_labels)
    hists: dict = {}
    cfgs = {n: replace(cfg.image) for n in bi.names}
    nets = run.stage("train-crossmodal", train_crossmodal, bi, split, d, cfgs, hists)
    for name, net in nets.items():
        save_checkpoint(net, run.dir / f"{name}.npz")
    run.manifest["modality_loss"] = hists
    results = run.stage("eval", crossmodal_eval, nets, bi, split, cfg.eval.cutoff)
    baseline = random_ranking_map(ds.labels[split.query], ds.labels[split.database])
    rows = [[a, b, r.map, baseline] for (a, b), r in results.items()]
    _write_table(run.dir / "crossmodal.csv", ["query", "database", "map", "random_baseline"], rows)
    run.manifest["maps"] = {f"{a}->{b}": r.map for (a, b), r in results.items()}
    run.manifest["random_baseline"] = baseline
    run.write()
    return {"maps": {(a, b): r.map for (a, b), r in results.items()}, "random_baseline": baseline}
