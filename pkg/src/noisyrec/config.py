"""Flat key-value experiment configuration.

The on-disk format is one `section.key = value` assignment per line, with
`#` comment lines. Lists are comma-separated. The config hash covers every
semantically meaningful field (everything except the output directory).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields

from .exceptions import ConfigError

_VARIANTS = ("full", "no_gmm", "no_bltm", "normal")


def _parse_bool(raw):
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got '{raw}'")


def _parse_str_tuple(raw):
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _parse_int_tuple(raw):
    return tuple(int(p) for p in _parse_str_tuple(raw))


def _parse_float_tuple(raw):
    return tuple(float(p) for p in _parse_str_tuple(raw))


@dataclass
class ExperimentConfig:
    data_path: str = ""
    data_delimiter: str = "tab"
    data_columns: tuple = ("user", "item", "label", "timestamp")
    num_classes: int = 5
    split_ratios: tuple = (0.8, 0.1, 0.1)
    split_seed: int = 0
    filter_kind: str = "none"
    filter_threshold: float = 0.0
    noise_kind: str = "none"
    noise_eta: float = 0.2
    noise_seed: int = 0
    embedding_dim: int = 32
    variants: tuple = ("full",)
    lambda_weight: float = 1.0
    batch_size: int = 256
    epochs: int = 100
    lr_class: float = 1e-3
    lr_transition: float = 0.5
    optimizer: str = "adam"
    transition_optimizer: str = "sgd"
    rank_score: str = "top-class"
    init_scale: float = 0.1
    rho0: float = 0.4
    gamma: float = 0.9
    rho_min: float = 0.0
    tau0: float = 0.5
    tau_gamma: float = 0.9
    refresh_interval: int = 5
    sample_by_weight: bool = True
    weight_in_loss: bool = True
    include_self: bool = True
    seeds: tuple = (0,)
    eval_ks: tuple = (5, 10, 20, 50)
    early_stop_patience: int = 0
    eval_every: int = 1
    out_dir: str = "runs/out"
    variance_p: float = 0.5
    variance_eta: float = 0.2
    variance_trials: int = 2000
    variance_per_trial: int = 500
    variance_seed: int = 0


# dotted config key -> (attribute, parser)
KEYMAP = {
    "data.path": ("data_path", str),
    "data.delimiter": ("data_delimiter", str),
    "data.columns": ("data_columns", _parse_str_tuple),
    "data.num_classes": ("num_classes", int),
    "split.ratios": ("split_ratios", _parse_float_tuple),
    "split.seed": ("split_seed", int),
    "filter.kind": ("filter_kind", str),
    "filter.threshold": ("filter_threshold", float),
    "noise.kind": ("noise_kind", str),
    "noise.eta": ("noise_eta", float),
    "noise.seed": ("noise_seed", int),
    "model.embedding_dim": ("embedding_dim", int),
    "model.variant": ("variants", _parse_str_tuple),
    "model.lambda": ("lambda_weight", float),
    "model.batch_size": ("batch_size", int),
    "model.epochs": ("epochs", int),
    "model.lr_class": ("lr_class", float),
    "model.lr_transition": ("lr_transition", float),
    "model.optimizer": ("optimizer", str),
    "model.transition_optimizer": ("transition_optimizer", str),
    "model.rank_score": ("rank_score", str),
    "model.init_scale": ("init_scale", float),
    "schedule.rho0": ("rho0", float),
    "schedule.gamma": ("gamma", float),
    "schedule.rho_min": ("rho_min", float),
    "schedule.tau0": ("tau0", float),
    "schedule.tau_gamma": ("tau_gamma", float),
    "schedule.refresh_interval": ("refresh_interval", int),
    "sampling.by_weight": ("sample_by_weight", _parse_bool),
    "sampling.weight_in_loss": ("weight_in_loss", _parse_bool),
    "reliability.include_self": ("include_self", _parse_bool),
    "train.seeds": ("seeds", _parse_int_tuple),
    "train.eval_ks": ("eval_ks", _parse_int_tuple),
    "train.early_stop_patience": ("early_stop_patience", int),
    "train.eval_every": ("eval_every", int),
    "output.dir": ("out_dir", str),
    "variance.p": ("variance_p", float),
    "variance.eta": ("variance_eta", float),
    "variance.n_trials": ("variance_trials", int),
    "variance.n_per_trial": ("variance_per_trial", int),
    "variance.seed": ("variance_seed", int),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in KEYMAP.items()}


def load_config(path):
    """Parse a flat key-value config file into an ExperimentConfig."""
    cfg = ExperimentConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            if not sep:
                raise ConfigError(f"line {line_no}: expected 'key = value'")
            key, raw = key.strip(), raw.strip()
            if key not in KEYMAP:
                raise ConfigError(f"{key}: unknown configuration key")
            attr, parser = KEYMAP[key]
            try:
                setattr(cfg, attr, parser(raw))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return cfg


def validate_config(cfg, need_data=True):
    """Range-check every field; raises ConfigError naming the field path."""
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}")

    if need_data:
        if not cfg.data_path:
            fail("data.path", "is required")
        if not os.path.exists(cfg.data_path):
            fail("data.path", f"file '{cfg.data_path}' does not exist")
    if cfg.num_classes < 2:
        fail("data.num_classes", "must be at least 2")
    if len(cfg.split_ratios) != 3 or any(r < 0 for r in cfg.split_ratios):
        fail("split.ratios", "needs three non-negative values")
    if abs(sum(cfg.split_ratios) - 1.0) > 1e-9:
        fail("split.ratios", "must sum to 1")
    if cfg.filter_kind not in ("none", "rating-equals", "rating-greater-than", "aux-at-least"):
        fail("filter.kind", f"unknown kind '{cfg.filter_kind}'")
    if cfg.noise_kind not in ("none", "symmetric", "pairflip"):
        fail("noise.kind", f"unknown kind '{cfg.noise_kind}'")
    if not 0.0 <= cfg.noise_eta < 1.0:
        fail("noise.eta", "must lie in [0, 1)")
    if cfg.embedding_dim < 1:
        fail("model.embedding_dim", "must be at least 1")
    if not cfg.variants or any(v not in _VARIANTS for v in cfg.variants):
        fail("model.variant", f"must be a subset of {_VARIANTS}")
    if cfg.lambda_weight <= 0:
        fail("model.lambda", "must be positive")
    if cfg.batch_size < 1:
        fail("model.batch_size", "must be at least 1")
    if cfg.epochs < 1:
        fail("model.epochs", "must be at least 1")
    if cfg.lr_class <= 0 or cfg.lr_transition <= 0:
        fail("model.lr_class", "learning rates must be positive")
    if cfg.optimizer not in ("adam", "sgd"):
        fail("model.optimizer", f"unknown optimizer '{cfg.optimizer}'")
    if cfg.transition_optimizer not in ("adam", "sgd"):
        fail("model.transition_optimizer", f"unknown optimizer '{cfg.transition_optimizer}'")
    if cfg.rank_score not in ("top-class", "expected-rating"):
        fail("model.rank_score", f"unknown ranking score '{cfg.rank_score}'")
    if not 0.0 <= cfg.rho0 < 1.0:
        fail("schedule.rho0", "must lie in [0, 1)")
    if not 0.0 < cfg.gamma <= 1.0:
        fail("schedule.gamma", "must lie in (0, 1]")
    if cfg.rho_min < 0 or cfg.rho_min > cfg.rho0:
        fail("schedule.rho_min", "must lie in [0, rho0]")
    if not 0.0 < cfg.tau_gamma <= 1.0:
        fail("schedule.tau_gamma", "must lie in (0, 1]")
    if cfg.refresh_interval < 1:
        fail("schedule.refresh_interval", "must be at least 1")
    if not cfg.seeds:
        fail("train.seeds", "needs at least one seed")
    if any(k < 1 for k in cfg.eval_ks):
        fail("train.eval_ks", "every K must be at least 1")
    if cfg.early_stop_patience < 0:
        fail("train.early_stop_patience", "must be non-negative")
    if cfg.eval_every < 1:
        fail("train.eval_every", "must be at least 1")
    if not 0.0 < cfg.variance_p < 1.0:
        fail("variance.p", "must lie in (0, 1)")
    if not 0.0 <= cfg.variance_eta < 0.5:
        fail("variance.eta", "must lie in [0, 0.5)")
    if cfg.variance_trials < 2 or cfg.variance_per_trial < 1:
        fail("variance.n_trials", "needs at least 2 trials and 1 draw per trial")
    return cfg


def _canonical_value(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def config_text(cfg, include_output=True):
    """Canonical text form: sorted `key = value` lines."""
    lines = []
    for f in fields(cfg):
        key = _ATTR_TO_KEY[f.name]
        if not include_output and key == "output.dir":
            continue
        lines.append(f"{key} = {_canonical_value(getattr(cfg, f.name))}")
    return "\n".join(sorted(lines)) + "\n"


def config_hash(cfg):
    """Hash of all semantic fields (output.dir excluded)."""
    return hashlib.sha256(config_text(cfg, include_output=False).encode("utf-8")).hexdigest()
