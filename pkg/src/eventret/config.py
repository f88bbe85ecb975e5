"""Run configuration: nested sections loaded from YAML or JSON, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .annotation.prompts import InstructionKind
from .annotation.scorers import DEFAULT_ZOO, SCORER_KINDS
from .encoder import EncoderConfig
from .fusion import FusionConfig
from .model import VARIANTS, ModelConfig
from .training import TrainConfig


@dataclass
class BankConfig:
    factor: int = 8

    def __post_init__(self) -> None:
        if self.factor < 1:
            raise ValueError("bank.factor must be >= 1")


@dataclass
class AnnotationConfig:
    scorers: list[dict] = field(default_factory=lambda: [dict(s) for s in DEFAULT_ZOO])
    quorum: int = 4
    instruction: str = InstructionKind.COT_GRADE.value
    concurrency: int = 4
    retries: int = 2
    backoff: float = 0.5
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if not 1 <= self.quorum <= max(1, len(self.scorers)):
            raise ValueError("annotation.quorum must lie in 1..number of scorers")
        for s in self.scorers:
            if set(s) - {"name", "kind", "threshold"} or not {"name", "kind", "threshold"} <= set(s):
                raise ValueError("annotation.scorers entries need exactly name, kind, threshold")
            if s["kind"] not in SCORER_KINDS:
                raise ValueError(f"unknown scorer kind {s['kind']!r}")
        InstructionKind(self.instruction)
        if self.concurrency < 1 or self.retries < 0 or self.backoff < 0:
            raise ValueError("annotation.concurrency >= 1, retries >= 0, backoff >= 0")


@dataclass
class EventConfig:
    min_len: int = 4
    max_len: int = 200
    blocklist: list[str] = field(default_factory=list)
    sim_threshold: float = 0.8
    candidates: int = 10
    half_life_hours: float = 24.0
    floor: float = 0.3
    w_rel: float = 1.0
    w_rec: float = 0.3
    w_pop: float = 0.2
    embedder: str = "model"  # model | hashed

    def __post_init__(self) -> None:
        if self.embedder not in ("model", "hashed"):
            raise ValueError("event.embedder must be 'model' or 'hashed'")
        if self.min_len < 1 or self.max_len < self.min_len:
            raise ValueError("event.min_len/max_len out of order")
        if self.half_life_hours <= 0 or self.candidates < 1:
            raise ValueError("event.half_life_hours > 0 and event.candidates >= 1 required")


@dataclass
class EvalConfig:
    ks: list[int] = field(default_factory=lambda: [10, 50])
    min_grade: int = 2
    event_grade: int = 4
    search_k: int = 100

    def __post_init__(self) -> None:
        if not self.ks or any(k < 1 for k in self.ks) or self.search_k < 1:
            raise ValueError("eval.ks and eval.search_k must be >= 1")


_SECTIONS = {"encoder": EncoderConfig, "fusion": FusionConfig, "train": TrainConfig, "bank": BankConfig,
             "annotation": AnnotationConfig, "event": EventConfig, "eval": EvalConfig}


@dataclass
class RunConfig:
    """Top-level ``seed`` drives every random draw; ``train.seed`` is overwritten by it."""

    seed: int = 0
    output_dir: str = "runs"
    variant: str = "err"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bank: BankConfig = field(default_factory=BankConfig)
    annotation: AnnotationConfig = field(default_factory=AnnotationConfig)
    event: EventConfig = field(default_factory=EventConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        self.train.seed = self.seed

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(self.encoder, self.fusion, self.variant)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any] | None) -> "RunConfig":
        raw = dict(raw or {})
        top = {f.name for f in fields(cls)}
        unknown = set(raw) - top
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for name, value in raw.items():
            if name in _SECTIONS:
                if not isinstance(value, Mapping):
                    raise ValueError(f"config section {name!r} must be a mapping")
                kind = _SECTIONS[name]
                allowed = {f.name for f in fields(kind)}
                bad = set(value) - allowed
                if bad:
                    raise ValueError(f"unknown config keys in {name}: {sorted(bad)}")
                kwargs[name] = kind(**value)
            else:
                kwargs[name] = value
        return cls(**kwargs)


def load_config(path: str | Path | None = None, seed: int | None = None, **overrides: Any) -> RunConfig:
    """Read a YAML/JSON config (or defaults), then apply a seed override and top-level overrides."""
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        raw = json.loads(text) if str(path).endswith(".json") else (yaml.safe_load(text) or {})
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a mapping")
    if seed is not None:
        raw["seed"] = seed
    for k, v in overrides.items():
        if v is not None:
            raw[k] = v
    return RunConfig.from_dict(raw)
