#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Training and evaluation configuration.

Config files are JSON, or YAML when the file ends in .yaml/.yml. Every key
is optional and falls back to the defaults below; unknown keys are rejected.

Example (train.json):
    {
        "architecture": "dcgan",
        "image_size": 8,
        "base_features": 8,
        "min_spatial": 2,
        "latent_dim": 16,
        "batch_size": 32,
        "total_iters": 2000,
        "eval_every": 500
    }
"""

from __future__ import annotations

import dataclasses
import json
import pathlib
from typing import Any, Dict, Optional, Tuple

import yaml

from constants import (
    ARCHITECTURES,
    EVAL_EVERY,
    EVAL_LR,
    FINAL_EVAL_STEPS,
    LEARNING_RATE,
    RMSPROP_ALPHA,
    RMSPROP_EPS,
    RUNNING_EVAL_SAMPLES,
    RUNNING_EVAL_STEPS,
    VARIANTS,
)
from utils.error_handling import ConfigError
from utils.structure import atomic_write_json


@dataclasses.dataclass
class TrainConfig:
    # optimizer
    lr: float = LEARNING_RATE
    rmsprop_alpha: float = RMSPROP_ALPHA
    rmsprop_eps: float = RMSPROP_EPS
    # schedule
    batch_size: int = 32
    latent_dim: int = 256
    total_iters: int = 2000
    eval_every: int = EVAL_EVERY
    checkpoint_every: int = 1000
    log_every: int = 50
    seed: int = 0
    # network
    variant: str = "wn"
    architecture: str = "dcgan"
    base_features: int = 64
    min_spatial: int = 4
    hidden: int = 64
    depth: int = 2
    feature_plan: Tuple[int, ...] = (64, 128, 256, 384, 512)
    image_size: Optional[int] = None
    # data
    n_samples: int = 2000
    test_size: int = 200
    # running evaluation
    running_eval_samples: int = RUNNING_EVAL_SAMPLES
    running_eval_steps: int = RUNNING_EVAL_STEPS
    eval_lr: float = EVAL_LR
    # artifacts
    sample_grid_count: int = 16
    stability_window: int = 10
    prefetch: int = 4

    def __post_init__(self):
        self.feature_plan = tuple(int(f) for f in self.feature_plan)
        validate_train_config(self)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data["feature_plan"] = list(self.feature_plan)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        _reject_unknown(cls, data)
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Invalid training config: {e}") from e

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass
class EvalConfig:
    steps: int = FINAL_EVAL_STEPS
    lr: float = EVAL_LR
    rmsprop_alpha: float = RMSPROP_ALPHA
    rmsprop_eps: float = RMSPROP_EPS
    n_samples: Optional[int] = None     # None evaluates every given sample
    seed: int = 0
    record_every: int = 0               # 0 disables the loss-vs-steps curve

    def __post_init__(self):
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ConfigError(f"Evaluation steps must be an integer >= 1, got {self.steps!r}")
        if self.lr <= 0 or self.rmsprop_eps <= 0:
            raise ConfigError("Evaluation lr and rmsprop_eps must be positive")
        if not 0.0 < self.rmsprop_alpha < 1.0:
            raise ConfigError(f"rmsprop_alpha must lie in (0, 1), got {self.rmsprop_alpha}")
        if self.n_samples is not None and self.n_samples < 1:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")
        if self.record_every < 0:
            raise ConfigError(f"record_every must be >= 0, got {self.record_every}")

    @classmethod
    def running(cls, cfg: TrainConfig) -> "EvalConfig":
        return cls(steps=cfg.running_eval_steps, lr=cfg.eval_lr, rmsprop_alpha=cfg.rmsprop_alpha,
                   rmsprop_eps=cfg.rmsprop_eps, n_samples=cfg.running_eval_samples, seed=cfg.seed)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


_POSITIVE_INTS = ("batch_size", "latent_dim", "total_iters", "eval_every", "checkpoint_every",
                  "log_every", "base_features", "min_spatial", "hidden", "depth", "n_samples",
                  "test_size", "running_eval_samples", "running_eval_steps", "sample_grid_count",
                  "stability_window", "prefetch")


def validate_train_config(cfg: TrainConfig) -> None:
    """Raise ConfigError listing every invalid field."""
    problems = []
    for name in _POSITIVE_INTS:
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            problems.append(f"{name} must be a positive integer (got {value!r})")
    for name in ("lr", "rmsprop_eps", "eval_lr"):
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
            problems.append(f"{name} must be positive (got {value!r})")
    if not isinstance(cfg.rmsprop_alpha, (int, float)) or not 0.0 < cfg.rmsprop_alpha < 1.0:
        problems.append(f"rmsprop_alpha must lie in (0, 1) (got {cfg.rmsprop_alpha!r})")
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0:
        problems.append(f"seed must be an unsigned integer (got {cfg.seed!r})")
    if isinstance(cfg.eval_every, int) and isinstance(cfg.total_iters, int) and cfg.eval_every > cfg.total_iters:
        problems.append(f"eval_every ({cfg.eval_every}) must not exceed total_iters ({cfg.total_iters})")
    if cfg.variant not in VARIANTS:
        problems.append(f"variant must be one of {VARIANTS} (got {cfg.variant!r})")
    if cfg.architecture not in ARCHITECTURES:
        problems.append(f"architecture must be one of {ARCHITECTURES} (got {cfg.architecture!r})")
    if not cfg.feature_plan or any(f < 1 for f in cfg.feature_plan):
        problems.append(f"feature_plan must be a non-empty list of positive integers (got {cfg.feature_plan!r})")
    if cfg.image_size is not None and (not isinstance(cfg.image_size, int) or cfg.image_size < 1):
        problems.append(f"image_size must be a positive integer or null (got {cfg.image_size!r})")
    if problems:
        raise ConfigError("Invalid training config: " + "; ".join(problems))


def _reject_unknown(cls, data: Dict[str, Any]) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")


def read_config_file(path: pathlib.Path) -> Dict[str, Any]:
    """Parse a JSON or YAML config file into a dict."""
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not parse config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must contain a mapping at the top level")
    return data


def load_train_config(path: Optional[pathlib.Path], **overrides) -> TrainConfig:
    """Load a training config file (or defaults when path is None) and apply overrides."""
    data = read_config_file(path) if path is not None else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(data)


def save_train_config(path: pathlib.Path, cfg: TrainConfig) -> None:
    atomic_write_json(path, cfg.to_dict())
