"""Run configuration: one JSON file for model, training, synthesis and evaluation settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .datasets import SynthConfig
from .evaluation import AP_METHODS
from .model import ModelConfig, TrainConfig
from .util import ConfigError, strict_from_dict, to_dict


@dataclass(frozen=True)
class EvalConfig:
    iou_thr: float = 0.5
    ap_method: str = "all_point"
    include_human_score: bool = False
    maxout: bool = True
    maxout_key: str = "hold_prob"
    detection_threshold: float = 0.5
    hifd_alpha: float = 0.3
    ohfd_beta: float = 0.5
    hcfd_min_confidence: float = 0.0

    def __post_init__(self) -> None:
        if self.ap_method not in AP_METHODS:
            raise ValueError(f"ap_method must be one of {AP_METHODS}")
        if self.maxout_key not in ("hold_prob", "final_score"):
            raise ValueError("maxout_key must be hold_prob or final_score")
        for name in ("iou_thr", "detection_threshold", "hifd_alpha", "ohfd_beta", "hcfd_min_confidence"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


SECTIONS = {"model": ModelConfig, "train": TrainConfig, "synth": SynthConfig, "eval": EvalConfig}


@dataclass(frozen=True)
class RunConfig:
    seed: int
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], seed: int | None = None) -> "RunConfig":
        """Parse a config object; ``seed`` (e.g. from ``--seed``) overrides the file's value.

        The top-level seed is the only seed; it drives synthesis, weight
        initialization, dropout and shuffling.
        """
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(SECTIONS) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        if seed is None:
            seed = data.get("seed")
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("a non-negative integer seed is required (config \"seed\" or --seed)")
        sections = {}
        for name, typ in SECTIONS.items():
            body = data.get(name, {})
            if isinstance(body, Mapping) and "seed" in body:
                raise ConfigError(f"{name}.seed is not allowed; set the top-level \"seed\"")
            sections[name] = strict_from_dict(typ, body, name)
        sections["train"] = replace(sections["train"], seed=seed)
        sections["synth"] = replace(sections["synth"], seed=seed)
        return cls(seed=seed, **sections)

    @classmethod
    def load(cls, path: str | Path | None, seed: int | None = None) -> "RunConfig":
        data: Any = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, seed)

    def override(self, section: str, **values: Any) -> "RunConfig":
        """Apply CLI flag overrides (``None`` values are skipped) with full re-validation."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = getattr(self, section)
        merged = {**to_dict(current), **values}
        merged.pop("seed", None)
        new = strict_from_dict(type(current), merged, section)
        if section in ("train", "synth"):
            new = replace(new, seed=self.seed)
        return replace(self, **{section: new})

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"seed": self.seed}
        for name in SECTIONS:
            body = to_dict(getattr(self, name))
            body.pop("seed", None)
            out[name] = body
        return out
