"""Experiment configuration: a single versioned JSON document."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .statevector import DEFAULT_MAX_QUBITS

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic"
    # synthetic
    num_points: int | None = None
    concept_layers: int = 3
    concept_seed: int | None = None
    # fashion_mnist
    train_images: str | None = None
    train_labels: str | None = None
    class_a: int = 3
    class_b: int = 6


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    num_qubits: int = 10
    n_train: int = 500
    n_test: int = 500
    balance: bool = False
    layer_rate: float = 0.1
    L_values: tuple[int, ...] = (8, 16, 24, 32, 40)
    lam: float = 0.5
    delta: float = 0.01
    shots_m: int | None = None
    seed: int = 0
    output_dir: str = "out"
    threads: int = 1
    bounds_m_values: tuple[float, ...] = (1e4, 1e6, 1e8, 1e10, 1e12)
    regions_n_values: tuple[float, ...] = (4, 16, 100, 500, 1000, 10_000, 2**20)
    regions_L_values: tuple[int, ...] = tuple(range(1, 61))
    schema_version: int = SCHEMA_VERSION

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def validate(self) -> "ExperimentConfig":
        ds = self.dataset
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if ds.kind not in ("synthetic", "fashion_mnist"):
            raise ConfigError(f"dataset.kind must be synthetic or fashion_mnist, got {ds.kind!r}")
        if ds.kind == "fashion_mnist":
            if not ds.train_images or not ds.train_labels:
                raise ConfigError("fashion_mnist dataset needs train_images and train_labels paths")
            if ds.class_a == ds.class_b:
                raise ConfigError("class_a and class_b must differ")
        if ds.kind == "synthetic" and ds.num_points is not None \
                and ds.num_points < self.n_train + self.n_test:
            raise ConfigError("dataset.num_points smaller than n_train + n_test")
        if not isinstance(self.num_qubits, int) or not 1 <= self.num_qubits <= DEFAULT_MAX_QUBITS:
            raise ConfigError(f"num_qubits must be an integer in [1, {DEFAULT_MAX_QUBITS}]")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be >= 1")
        if self.balance and (self.n_train % 2 or self.n_test % 2):
            raise ConfigError("balanced splits need even n_train and n_test")
        if not 0.0 <= self.layer_rate <= 1.0:
            raise ConfigError("layer_rate must lie in [0, 1]")
        if not self.L_values:
            raise ConfigError("L_values is empty")
        for L in self.L_values:
            if not isinstance(L, int) or L < 1:
                raise ConfigError(f"every L must be an integer >= 1, got {L!r}")
        if len(set(self.L_values)) != len(self.L_values):
            raise ConfigError("L_values contains duplicates")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.shots_m is not None and (not isinstance(self.shots_m, int) or self.shots_m < 1):
            raise ConfigError("shots_m must be a positive integer or null")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if any(not (m >= 1 and math.isfinite(m)) for m in self.bounds_m_values):
            raise ConfigError("bounds_m_values must be finite and >= 1")
        if any(not n >= 2 for n in self.regions_n_values):
            raise ConfigError("regions_n_values must be >= 2")
        if any(not (isinstance(L, int) and L >= 1) for L in self.regions_L_values):
            raise ConfigError("regions_L_values must be integers >= 1")
        return self

    def to_json(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


_JSON_RENAMES = {"lambda": "lam"}


def _parse_range(value, key: str) -> tuple:
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "step"}
        if unknown or "start" not in value or "stop" not in value:
            raise ConfigError(f"{key}: a range needs start/stop[/step], got keys {sorted(value)}")
        return tuple(range(value["start"], value["stop"] + 1, value.get("step", 1)))
    if isinstance(value, list):
        return tuple(value)
    raise ConfigError(f"{key} must be a list or a {{start, stop, step}} range")


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, value in doc.items():
        name = _JSON_RENAMES.get(key, key)
        if key == "lam" or name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[name] = value
    if "dataset" in kwargs:
        ds = kwargs["dataset"]
        if not isinstance(ds, dict):
            raise ConfigError("dataset must be an object")
        ds_known = {f.name for f in fields(DatasetSpec)}
        unknown = set(ds) - ds_known
        if unknown:
            raise ConfigError(f"unknown dataset keys {sorted(unknown)}")
        kwargs["dataset"] = DatasetSpec(**ds)
    for key in ("L_values", "regions_L_values", "regions_n_values", "bounds_m_values"):
        if key in kwargs:
            kwargs[key] = _parse_range(kwargs[key], key)
    return ExperimentConfig(**kwargs).validate()


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc)


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides).validate()
