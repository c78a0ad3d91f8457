"""Training configuration and its TOML file format."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..ilinear import Mode
from ..outlier import DEFAULT_GAMMA

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Fine-tuning defaults for GLUE-sized runs; lr_scale adapts the base rate to toy data.
BASE_LEARNING_RATE = 2e-5
DEFAULT_BATCH_SIZE = 32
DEFAULT_EPOCHS = 5


@dataclass
class OutlierInjection:
    """Adds ``+-scale`` to ``columns`` feature columns (sign fixed per column)."""

    columns: int = 0
    scale: float = 0.0

    @property
    def active(self) -> bool:
        return self.columns > 0 and self.scale != 0


@dataclass
class SyntheticSpec:
    n_samples: int = 2000
    n_features: int = 32
    n_classes: int = 2
    mean: float = 2.0
    noise: float = 1.0
    test_fraction: float = 0.25
    injection: OutlierInjection = field(default_factory=OutlierInjection)

    def validate(self) -> None:
        if self.n_samples < 4 or self.n_features < 1:
            raise ConfigError("synthetic set needs n_samples >= 4 and n_features >= 1")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if not 0 <= self.injection.columns <= self.n_features:
            raise ConfigError("injection.columns must be between 0 and n_features")


@dataclass
class TrainConfig:
    mode: Mode = Mode.APPROACH2
    gamma: float = DEFAULT_GAMMA
    dims: list = field(default_factory=lambda: [32, 64, 2])
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = BASE_LEARNING_RATE
    lr_scale: float = 1.0
    seed: int = 0
    dataset: SyntheticSpec | str = field(default_factory=SyntheticSpec)
    metrics_path: str | None = None

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        if isinstance(self.dataset, dict):
            self.dataset = _synthetic_from_dict(self.dataset)

    @property
    def effective_lr(self) -> float:
        return self.learning_rate * self.lr_scale

    def validate(self) -> "TrainConfig":
        if len(self.dims) < 2 or any(int(d) != d or d < 1 for d in self.dims):
            raise ConfigError("dims needs at least two positive integers")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not self.effective_lr > 0:
            raise ConfigError("learning rate must be positive")
        if isinstance(self.dataset, SyntheticSpec):
            self.dataset.validate()
            if self.dataset.n_features != self.dims[0]:
                raise ConfigError(f"dims[0]={self.dims[0]} but the dataset has {self.dataset.n_features} features")
            if self.dataset.n_classes != self.dims[-1]:
                raise ConfigError(f"dims[-1]={self.dims[-1]} but the dataset has {self.dataset.n_classes} classes")
        return self

    def replace(self, **changes) -> "TrainConfig":
        data = self.to_dict()
        data.update(changes)
        return config_from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        if d["metrics_path"] is None:
            del d["metrics_path"]
        return d


def _synthetic_from_dict(d: dict) -> SyntheticSpec:
    d = dict(d)
    inj = d.pop("injection", None) or {}
    known = {f.name for f in fields(SyntheticSpec)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
    try:
        return SyntheticSpec(**d, injection=OutlierInjection(**inj))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**d).validate()


def load_config(path) -> TrainConfig:
    """Parse a TOML config.  ``dataset`` is either a table or a CSV path string."""
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if isinstance(raw.get("dataset"), str):
        raw["dataset"] = str((Path(path).parent / raw["dataset"]).resolve())
    return config_from_dict(raw)


def dump_config(cfg: TrainConfig) -> str:
    """Serialize to TOML text readable by :func:`load_config`."""
    d = cfg.to_dict()
    lines = []
    dataset = d.pop("dataset")
    for k, v in d.items():
        lines.append(f"{k} = {_toml_value(v)}")
    if isinstance(dataset, str):
        lines.append(f"dataset = {_toml_value(dataset)}")
    else:
        inj = dataset.pop("injection")
        lines.append("\n[dataset]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in dataset.items()]
        lines.append("\n[dataset.injection]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in inj.items()]
    return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)
