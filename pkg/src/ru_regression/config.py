"""Experiment configuration: dataclasses, TOML loading and presets."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("one_dim_table", "high_dim_table", "sieve_rate", "oracle_check", "custom")


class ConfigError(ValueError):
    pass


@dataclass
class ModelSpec:
    kind: str = "one_dim"
    train_p: float = 0.2
    highdim_noise: float = 0.1
    highdim_noise_is_sd: bool = False


@dataclass
class SplitSizes:
    train: int = 7000
    validation: int = 1400
    test: int = 10000


@dataclass
class TrainingSpec:
    epochs: int = 100
    batch_size: int = 1750
    learning_rate: float = 1e-2
    validate_every: str = "epoch"
    erm_hidden: list[int] = field(default_factory=lambda: [128, 128])
    ru_hidden: list[int] = field(default_factory=lambda: [64, 64])
    alpha_softplus: bool = False
    dtype: str = "float64"


@dataclass
class SweepSpec:
    p_grid: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.5, 0.7, 0.9])
    gammas: list[float] = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    include_oracle: bool = True


@dataclass
class SieveSpec:
    n_grid: list[int] = field(default_factory=lambda: [500, 2000, 8000])
    gamma: float = 4.0
    p_smooth: float = 2.0
    kind: str = "polynomial"
    grid_points: int = 200
    max_iter: int = 20000


@dataclass
class OracleCheckSpec:
    n_cases: int = 1000
    tol: float = 1e-10
    resolution: float = 1e-6


@dataclass
class ExperimentConfig:
    kind: str = "one_dim_table"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    out: str = "results"
    save_checkpoints: bool = False
    save_datasets: bool = False
    model: ModelSpec = field(default_factory=ModelSpec)
    sizes: SplitSizes = field(default_factory=SplitSizes)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    sieve: SieveSpec = field(default_factory=SieveSpec)
    oracle_check: OracleCheckSpec = field(default_factory=OracleCheckSpec)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.model.kind not in ("one_dim", "high_dim"):
            raise ConfigError(f"model.kind must be one_dim or high_dim, got {self.model.kind!r}")
        if not 0 <= self.model.train_p <= 1:
            raise ConfigError("model.train_p must lie in [0, 1]")
        for g in list(self.sweep.gammas) + [self.sieve.gamma]:
            if not g > 1:
                raise ConfigError(f"Gamma values must be > 1, got {g!r}")
        if any(not 0 <= p <= 1 for p in self.sweep.p_grid) or not self.sweep.p_grid:
            raise ConfigError("sweep.p_grid must be a non-empty list of probabilities")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for name in ("train", "validation", "test"):
            if getattr(self.sizes, name) <= 0:
                raise ConfigError(f"sizes.{name} must be positive")
        t = self.training
        if t.epochs <= 0 or t.batch_size <= 0 or not t.learning_rate > 0:
            raise ConfigError("training epochs, batch_size and learning_rate must be positive")
        if t.validate_every not in ("epoch", "step"):
            raise ConfigError("training.validate_every must be 'epoch' or 'step'")
        if t.dtype not in ("float32", "float64"):
            raise ConfigError("training.dtype must be float32 or float64")
        if any(n < 3 for n in self.sieve.n_grid):
            raise ConfigError("sieve.n_grid entries must be >= 3")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Digest of everything that affects results (output location excluded)."""
        d = self.to_dict()
        for key in ("out", "save_checkpoints", "save_datasets"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _merge(obj, data: dict, path: str = ""):
    valid = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in valid:
            raise ConfigError(f"unknown config key {path + key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{path + key!r} must be a section")
            _merge(current, value, f"{path}{key}.")
        else:
            if isinstance(current, bool) and not isinstance(value, bool):
                raise ConfigError(f"{path + key!r} must be a boolean")
            if isinstance(current, (int, float)) and not isinstance(current, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"{path + key!r} must be a number")
                if isinstance(current, int) and value != int(value):
                    raise ConfigError(f"{path + key!r} must be an integer")
                value = type(current)(value)
            if isinstance(current, list) and not isinstance(value, list):
                raise ConfigError(f"{path + key!r} must be a list")
            setattr(obj, key, value)
    return obj


def from_dict(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = copy.deepcopy(base) if base is not None else ExperimentConfig()
    return _merge(cfg, data).validate()


def load(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    preset = data.pop("preset", None)
    if preset is not None:
        base = get_preset(preset)
    return from_dict(data, base)


def _table1() -> ExperimentConfig:
    return ExperimentConfig(kind="one_dim_table", out="results/table1")


def _table2() -> ExperimentConfig:
    return ExperimentConfig(
        kind="high_dim_table",
        out="results/table2",
        model=ModelSpec(kind="high_dim"),
        sizes=SplitSizes(100000, 20000, 20000),
        training=TrainingSpec(epochs=50, batch_size=25000, validate_every="step", dtype="float32"),
    )


def _sieve_rate() -> ExperimentConfig:
    return ExperimentConfig(kind="sieve_rate", seeds=[0, 1, 2], out="results/sieve_rate")


def _oracle() -> ExperimentConfig:
    return ExperimentConfig(kind="oracle_check", seeds=[0], out="results/oracle_check")


PRESETS = {
    "table1": _table1,
    "table2": _table2,
    "table2-sd": lambda: from_dict({"out": "results/table2_sd", "model": {"highdim_noise_is_sd": True}}, _table2()),
    "sieve-rate": _sieve_rate,
    "oracle-check": _oracle,
}


def get_preset(name: str) -> ExperimentConfig:
    try:
        return PRESETS[name]().validate()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def parse_seeds(text: str) -> list[int]:
    """'0..5' (inclusive), '0,2,4' or '3'."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                a, b = part.split("..")
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ConfigError(f"empty seed range {part!r}")
                out.extend(range(lo, hi + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"cannot parse seeds {text!r}") from None
    if not out:
        raise ConfigError("no seeds given")
    return out
