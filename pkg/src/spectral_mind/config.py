"""Pipeline configuration: TOML or JSON files, one section per stage."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dsp import PreprocessConfig
from .ersp import ErspConfig
from .synth import SynthConfig
from .train import TrainConfig

SEED_ENV = "SPECTRAL_MIND_SEED"
MODELS = ("cnn", "lstm")


class ConfigError(ValueError):
    """A configuration field is unknown or fails validation."""


@dataclass
class RunConfig:
    model: str = "cnn"
    n_splits: int = 20
    base_seed: int = 0
    jobs: int = 1

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model: expected one of {MODELS}, got {self.model!r}")
        if self.n_splits < 1:
            raise ValueError("n_splits: must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs: must be >= 1")
        if self.base_seed < 0:
            raise ValueError("base_seed: must be >= 0")


@dataclass
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    ersp: ErspConfig = field(default_factory=ErspConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> None:
        checks = {
            "preprocess": self.preprocess.validate,
            "ersp": lambda: self.ersp.validate(self.preprocess.target_fs_hz),
            "train": self.train.validate,
            "synth": self.synth.validate,
            "run": self.run.validate,
        }
        for section, check in checks.items():
            try:
                check()
            except ValueError as exc:
                raise ConfigError(f"{section}.{exc}") from None

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


_SECTIONS = {
    "preprocess": PreprocessConfig,
    "ersp": ErspConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
    "run": RunConfig,
}


def _coerce(value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build_section(name: str, values: dict):
    cls = _SECTIONS[name]
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown field")
        kwargs[key] = _coerce(value, getattr(defaults, key))
    return cls(**kwargs)


def from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    cfg = PipelineConfig(**{name: _build_section(name, data.get(name, {})) for name in _SECTIONS})
    cfg.validate()
    return cfg


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a TOML (or JSON) file, apply ``section.field`` overrides and the seed env var."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        text = p.read_text()
        try:
            data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{p}: {exc}") from None
    data = {k: dict(v) for k, v in data.items()}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            data.setdefault("run", {})["base_seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"run.base_seed: {SEED_ENV}={env_seed!r} is not an integer") from None
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        data.setdefault(section, {})[key] = value
    return from_dict(data)
