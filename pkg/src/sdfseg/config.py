"""Declarative run configuration: one JSON document drives a whole run.

Parsing is strict: unknown keys anywhere in the document are rejected so
typos cannot silently fall back to defaults. The fully resolved document is
echoed into every output artifact for provenance.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .extractor import GridSpec
from .field_net import HEAD_VARIANTS
from .losses import LossWeights
from .sampler import SamplerConfig

__all__ = ["ConfigError", "MetricsConfig", "TrainSection", "RunConfig"]


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 5e-5
    iterations: int = 10000
    epochs: int = 10
    checkpoint_every: int = 0


@dataclass(frozen=True)
class MetricsConfig:
    tau: float = 0.005
    eval_samples: int = 30000
    consistency_k: int = 10
    consistency_anchors: int = 1000


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    dtype: str = "float64"
    head_variant: str = "relu"
    num_parts: int | None = None  # None: infer from the input mesh
    surface_samples: int = 30000
    synth_resolution: int = 192
    train: TrainSection = field(default_factory=TrainSection)
    weights: LossWeights = field(default_factory=LossWeights)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        if self.head_variant not in HEAD_VARIANTS:
            raise ConfigError(
                f"head_variant must be one of {HEAD_VARIANTS}, got {self.head_variant!r}"
            )
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("dtype must be 'float64' or 'float32'")

    def resolved(self) -> dict:
        """The fully expanded document, suitable for embedding in outputs."""
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        sections = {
            "train": TrainSection,
            "weights": LossWeights,
            "sampler": SamplerConfig,
            "grid": GridSpec,
            "metrics": MetricsConfig,
        }
        top_fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - top_fields
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in doc.items():
            if key in sections:
                section_cls = sections[key]
                if not isinstance(value, dict):
                    raise ConfigError(f"config section {key!r} must be an object")
                allowed = {f.name for f in dataclasses.fields(section_cls)}
                bad = set(value) - allowed
                if bad:
                    raise ConfigError(f"unknown keys in config section {key!r}: {sorted(bad)}")
                try:
                    kwargs[key] = section_cls(**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"invalid config section {key!r}: {exc}") from exc
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def override(self, **updates) -> "RunConfig":
        """Apply non-None command-line overrides onto this config."""
        cfg = self
        for key, value in updates.items():
            if value is None:
                continue
            if key in ("iterations",):
                cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, iterations=value))
            elif key in ("resolution", "chunk_size"):
                cfg = dataclasses.replace(cfg, grid=dataclasses.replace(cfg.grid, **{key: value}))
            elif key == "tau":
                cfg = dataclasses.replace(cfg, metrics=dataclasses.replace(cfg.metrics, tau=value))
            elif key == "head":
                cfg = dataclasses.replace(cfg, head_variant=value)
            else:
                cfg = dataclasses.replace(cfg, **{key: value})
        return cfg
