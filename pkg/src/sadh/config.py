"""Experiment configuration: INI sections, defaults, validation and overrides.

Sections and keys (all optional; defaults shown by ``sadh show-config``)::

    [experiment]  K, output_dir, mars_margin
    [data]        source (synthetic|files), n_per_class, n_classes, dim,
                  multi_label_prob, noise_sigma, seed, features_path, labels_path
    [split]       per_class_query, per_class_train, seed, train_in_database
    [semantic]    hidden, alpha, lam, eta, beta, margin, epochs, batch_size, lr, seed
    [image]       hidden, alpha, lam, gamma, mu, eta, beta, epochs, batch_size,
                  lr, momentum, variant, mars_margin, margin_source,
                  unseen_fallback, seed
    [eval]        cutoff (ALL or int), topk (comma list), pr_mode (radius|rank)
    [crossmodal]  vocab, seed
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .image import ImageNetConfig
from .semantic import SemanticNetConfig


@dataclass
class DataConfig:
    source: str = "synthetic"
    n_per_class: int = 550
    n_classes: int = 4
    dim: int = 32
    multi_label_prob: float = 0.0
    noise_sigma: float = 0.1
    seed: int = 7
    features_path: str = ""
    labels_path: str = ""


@dataclass
class SplitConfig:
    per_class_query: int = 50
    per_class_train: int = 100
    seed: int = 0
    train_in_database: bool = True


@dataclass
class EvalConfig:
    cutoff: int | None = None
    topk: tuple = (1, 5, 10, 20, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000)
    pr_mode: str = "radius"


@dataclass
class CrossModalConfig:
    vocab: int = 200
    seed: int = 0


@dataclass
class ExperimentConfig:
    K: int = 16
    output_dir: str = "runs/default"
    mars_margin: float = 0.5
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    semantic: SemanticNetConfig = field(default_factory=SemanticNetConfig)
    image: ImageNetConfig = field(default_factory=ImageNetConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    crossmodal: CrossModalConfig = field(default_factory=CrossModalConfig)

    def __post_init__(self):
        self.semantic.K = self.K
        self.image.K = self.K

    def validate(self) -> "ExperimentConfig":
        if self.K < 1:
            raise ConfigError("experiment.K must be positive")
        self.semantic.K = self.image.K = self.K
        if not 0.0 <= self.mars_margin <= 1.0:
            raise ConfigError("experiment.mars_margin must lie in [0, 1]")
        d = self.data
        if d.source not in ("synthetic", "files"):
            raise ConfigError("data.source must be 'synthetic' or 'files'")
        if d.source == "synthetic":
            if min(d.n_per_class, d.n_classes, d.dim) < 1 or d.n_classes < 2:
                raise ConfigError("data: n_per_class, dim must be positive and n_classes >= 2")
            if not 0.0 <= d.multi_label_prob < 1.0:
                raise ConfigError("data.multi_label_prob must lie in [0, 1)")
            if d.noise_sigma < 0:
                raise ConfigError("data.noise_sigma must be non-negative")
        elif not (d.features_path and d.labels_path):
            raise ConfigError("data.source=files needs features_path and labels_path")
        if self.split.per_class_query < 0 or self.split.per_class_train < 1:
            raise ConfigError("split: per_class_query >= 0 and per_class_train >= 1 required")
        self.semantic.validate()
        self.image.validate()
        if self.eval.cutoff is not None and self.eval.cutoff < 1:
            raise ConfigError("eval.cutoff must be positive or ALL")
        if any(k < 1 for k in self.eval.topk):
            raise ConfigError("eval.topk entries must be positive")
        if self.eval.pr_mode not in ("radius", "rank"):
            raise ConfigError("eval.pr_mode must be 'radius' or 'rank'")
        return self

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed (data, split, both networks) set to ``seed``."""
        return replace(
            self,
            data=replace(self.data, seed=seed),
            split=replace(self.split, seed=seed),
            semantic=replace(self.semantic, seed=seed),
            image=replace(self.image, seed=seed),
            crossmodal=replace(self.crossmodal, seed=seed),
        )

    def with_variant(self, variant: str, mars_margin: float | None = None) -> "ExperimentConfig":
        if variant == "mars" and mars_margin is None:
            mars_margin = self.mars_margin
        return replace(self, image=replace(self.image, variant=variant,
                                           mars_margin=mars_margin if variant == "mars" else None))


_SECTIONS = {
    "data": "data",
    "split": "split",
    "semantic": "semantic",
    "image": "image",
    "eval": "eval",
    "crossmodal": "crossmodal",
}
_TOP = ("K", "output_dir", "mars_margin")


def _parse_value(current, raw: str, key: str, type_hint):
    raw = raw.strip()
    try:
        if key == "cutoff":
            return None if raw.upper() in ("ALL", "") else int(raw)
        if key == "mars_margin" and raw.lower() in ("", "none"):
            return None
        if isinstance(current, bool) or type_hint == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, tuple):
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float) or key in ("mars_margin",):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None


def _set(obj, key: str, raw: str, where: str):
    names = {f.name: f for f in fields(obj)}
    if key not in names:
        raise ConfigError(f"unknown key {where}.{key}")
    hint = "bool" if names[key].type in ("bool", bool) else None
    setattr(obj, key, _parse_value(getattr(obj, key), raw, key, hint))


def apply_override(cfg: ExperimentConfig, assignment: str) -> None:
    """Apply ``section.key=value`` (or ``key=value`` for [experiment])."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form section.key=value")
    lhs, value = assignment.split("=", 1)
    lhs = lhs.strip()
    if "." in lhs:
        section, key = lhs.split(".", 1)
    else:
        section, key = "experiment", lhs
    _apply(cfg, section, key, value)


def _apply(cfg: ExperimentConfig, section: str, key: str, value: str) -> None:
    if section == "experiment":
        if key not in _TOP:
            raise ConfigError(f"unknown key experiment.{key}")
        _set(cfg, key, value, "experiment")
    elif section in _SECTIONS:
        if section in ("semantic", "image") and key == "K":
            raise ConfigError("K is set once under [experiment]")
        _set(getattr(cfg, section), key, value, section)
    else:
        raise ConfigError(f"unknown section [{section}]")


def load_config(path=None, overrides=()) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep 'K' upper-case
        try:
            with open(Path(path)) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                _apply(cfg, section, key, value)
    for ov in overrides:
        apply_override(cfg, ov)
    return cfg.validate()


def _fmt(value) -> str:
    if value is None:
        return "ALL"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Full INI echo of ``cfg``; ``load_config`` on it reproduces ``cfg``."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["experiment"] = {k: _fmt(getattr(cfg, k)) for k in _TOP}
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        items = {}
        for f in fields(obj):
            if section in ("semantic", "image") and f.name == "K":
                continue
            v = getattr(obj, f.name)
            if f.name == "mars_margin" and v is None:
                v = "none"
            items[f.name] = _fmt(v)
        parser[section] = items
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_dict(cfg: ExperimentConfig) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(dump_config(cfg))
    return {s: dict(parser.items(s)) for s in parser.sections()}
