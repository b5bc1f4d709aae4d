"""Pipeline configuration: one JSON file, overridable by CLI flags.

Validation collects every violation across the dimension/channel closure
rules and reports them in a single error, so a bad config never reaches
any computation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import Dims, REDUCED_DIMS, STANDARD_DIMS
from .preprocess import Scope
from .report import LlmEndpointConfig
from .tensor import ValidationError
from .train import TrainConfig

__all__ = ["PipelineConfig", "ConfigError", "load_config"]

DIM_PRESETS = {"standard": STANDARD_DIMS, "reduced": REDUCED_DIMS}


class ConfigError(ValidationError):
    """Aggregated config validation failure; message lists every violation."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid configuration: " + "; ".join(violations))


@dataclass
class PipelineConfig:
    dims_name: str = "reduced"
    dims: Dims = REDUCED_DIMS
    input_size: int = 640
    preprocess_scope: Scope = Scope.FRAME
    reduction: int = 4
    d_e: int = 256
    lambda_fr: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)
    llm: LlmEndpointConfig | None = None
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        violations = list(self.dims.violations(self.reduction))
        if self.d_e < 1:
            violations.append(f"embedding width d_e must be >= 1, got {self.d_e}")
        if self.input_size < 2:
            violations.append(f"input size must be >= 2, got {self.input_size}")
        if self.lambda_fr < 0:
            violations.append(f"lambda_fr must be >= 0, got {self.lambda_fr}")
        if self.train.batch_size < 1:
            violations.append(f"batch size must be >= 1, got {self.train.batch_size}")
        if self.train.epochs < 1:
            violations.append(f"epochs must be >= 1, got {self.train.epochs}")
        if self.train.lr < 0:
            violations.append(f"learning rate must be >= 0, got {self.train.lr}")
        if self.train.patience < 1:
            violations.append(f"patience must be >= 1, got {self.train.patience}")
        if self.workers < 1:
            violations.append(f"workers must be >= 1, got {self.workers}")
        if violations:
            raise ConfigError(violations)


def _dims_from(obj) -> tuple[str, Dims]:
    if isinstance(obj, str):
        if obj not in DIM_PRESETS:
            raise ConfigError([f"unknown dims preset {obj!r}; use standard or reduced"])
        return obj, DIM_PRESETS[obj]
    try:
        return "custom", Dims(**{k: int(obj[k]) for k in ("h4", "w4", "c4", "h5", "w5", "c5")})
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError([f"dims must be a preset name or an extent mapping: {e}"])


def load_config(path: str | Path | None = None, overrides: dict | None = None
                ) -> PipelineConfig:
    """Build a validated config from an optional JSON file plus overrides.

    Override keys (flags win over the file): dims, seed, workers, llm_url,
    input_size, and any TrainConfig field under "train".
    """
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError([f"cannot read config file {path}: {e}"])
    overrides = overrides or {}

    merged = dict(raw)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "llm_url":
            merged.setdefault("llm", {})
            if merged["llm"] is None:
                merged["llm"] = {}
            merged["llm"]["url"] = value
        elif key.startswith("train."):
            merged.setdefault("train", {})[key.split(".", 1)[1]] = value
        else:
            merged[key] = value

    cfg = PipelineConfig()
    if "dims" in merged:
        cfg.dims_name, cfg.dims = _dims_from(merged["dims"])
    for key in ("input_size", "reduction", "d_e", "seed", "workers"):
        if key in merged:
            cfg_val = merged[key]
            try:
                setattr(cfg, key, int(cfg_val))
            except (TypeError, ValueError):
                raise ConfigError([f"{key} must be an integer, got {cfg_val!r}"])
    if "lambda_fr" in merged:
        cfg.lambda_fr = float(merged["lambda_fr"])
    if "preprocess_scope" in merged:
        try:
            cfg.preprocess_scope = Scope(merged["preprocess_scope"])
        except ValueError:
            raise ConfigError(
                [f"preprocess_scope must be frame or sequence, got {merged['preprocess_scope']!r}"]
            )
    if "train" in merged and merged["train"]:
        t = TrainConfig()
        for k, v in merged["train"].items():
            if not hasattr(t, k):
                raise ConfigError([f"unknown training option {k!r}"])
            setattr(t, k, type(getattr(t, k))(v))
        cfg.train = t
    if "llm" in merged and merged["llm"]:
        llm = merged["llm"]
        if "url" not in llm:
            raise ConfigError(["llm config needs a url"])
        kwargs = {k: v for k, v in llm.items()
                  if k in LlmEndpointConfig.__dataclass_fields__}
        cfg.llm = LlmEndpointConfig(**kwargs)
    cfg.validate()
    return cfg
