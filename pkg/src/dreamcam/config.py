"""Repo-wide configuration file (YAML, one section per subsystem).

Unknown sections or keys are rejected with the offending name; every key
has a default, so an empty file (or no file) is a valid configuration.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .model import DiscriminatorSpec, GeneratorSpec, HyperParams
from .preprocess import PreprocessConfig

__all__ = ["RepoConfig", "ConfigError", "load_repo_config", "TrainSection",
           "ModelSection", "InstrumentSection", "ServiceSection"]


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    depth: int = 4
    base_channels: int = 32
    disc_base_channels: int = 32

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(depth=self.depth, base_channels=self.base_channels)

    def discriminator_spec(self) -> DiscriminatorSpec:
        return DiscriminatorSpec(base_channels=self.disc_base_channels)


@dataclass
class TrainSection:
    total_iterations: int = 500_000
    batch_size: int = 4
    checkpoint_every: int = 1000
    preview_every: int = 1000
    seed: int = 0
    num_threads: int = 1
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_l1: float = 100.0
    lambda_gan: float = 1.0

    def hyperparams(self) -> HyperParams:
        return HyperParams(self.lr, self.beta1, self.beta2, self.lambda_l1, self.lambda_gan)


@dataclass
class InstrumentSection:
    headless: bool = False
    output_only: bool = False  # composite layout flag
    max_frames: int = 0  # 0 = unbounded


@dataclass
class ServiceSection:
    host: str = "127.0.0.1"
    port: int = 7654
    preview_fps: float = 15.0


@dataclass
class RepoConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    instrument: InstrumentSection = field(default_factory=InstrumentSection)
    service: ServiceSection = field(default_factory=ServiceSection)

    def describe(self) -> str:
        lines = []
        for f in fields(self):
            section = getattr(self, f.name)
            lines.append(f"[{f.name}]")
            for sf in fields(section):
                lines.append(f"  {sf.name} = {getattr(section, sf.name)}")
        return "\n".join(lines)


def _build_section(cls, name: str, data: dict):
    valid = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in valid:
            raise ConfigError(f"unknown key {key!r} in section {name!r}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {name!r}: {exc}") from exc


def load_repo_config(path=None) -> RepoConfig:
    if path is None:
        return RepoConfig()
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping of sections")
    sections = {f.name: f for f in fields(RepoConfig)}
    types = {
        "preprocess": PreprocessConfig,
        "model": ModelSection,
        "train": TrainSection,
        "instrument": InstrumentSection,
        "service": ServiceSection,
    }
    kwargs = {}
    for key, value in data.items():
        if key not in sections:
            raise ConfigError(f"unknown section {key!r}")
        kwargs[key] = _build_section(types[key], key, value or {})
    return RepoConfig(**kwargs)
