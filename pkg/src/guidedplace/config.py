"""Run configuration: one JSON document covering every stage, plus its hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .errors import DataError
from .guidance import GuidanceConfig
from .model import ModelConfig


def canonical_json(obj):
    if is_dataclass(obj):
        obj = asdict(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)


def _plain(v):
    if isinstance(v, tuple):
        return list(v)
    if hasattr(v, "tolist"):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def config_hash(obj, n=12):
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:n]


@dataclass(frozen=True)
class ScheduleConfig:
    T: int = 1000
    kind: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.02
    sample_steps: int = 200


@dataclass(frozen=True)
class DataConfig:
    counts: tuple = (8, 16, 32, 64)
    per_count: int = 2
    n_aug: int = 25
    base_seed: int = 0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr: float = 0.02
    momentum: float = 0.9
    clip: float = 1.0
    seed: int = 0
    schedule: ScheduleConfig = ScheduleConfig()
    model: ModelConfig = ModelConfig()

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("need epochs >= 0, batch_size >= 1 and lr > 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "schedule" in d:
            d["schedule"] = _build(ScheduleConfig, d["schedule"])
        if "model" in d:
            d["model"] = _build(ModelConfig, d["model"])
        return _build(cls, d)


def _build(cls, d):
    if isinstance(d, cls):
        return d
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise DataError(f"unknown {cls.__name__} keys: {', '.join(sorted(unknown))}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**kw)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = DataConfig()
    train: TrainConfig = TrainConfig()
    guidance: GuidanceConfig = GuidanceConfig()
    paths: dict = field(default_factory=dict)

    def hash(self):
        return config_hash(self)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        out = {}
        if "seed" in d:
            out["seed"] = int(d.pop("seed"))
        if "data" in d:
            out["data"] = _build(DataConfig, d.pop("data"))
        if "train" in d:
            out["train"] = TrainConfig.from_dict(d.pop("train"))
        if "guidance" in d:
            g = d.pop("guidance")
            out["guidance"] = g if isinstance(g, GuidanceConfig) else _build(GuidanceConfig, g)
        if "paths" in d:
            out["paths"] = dict(d.pop("paths"))
        if d:
            raise DataError(f"unknown config sections: {', '.join(sorted(d))}")
        return cls(**out)


def load_config(path):
    try:
        return RunConfig.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
