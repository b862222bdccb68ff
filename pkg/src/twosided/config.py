"""Experiment configuration: nested dataclasses loaded from YAML or JSON."""

from __future__ import annotations

import dataclasses
import json
import typing
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .agent.networks import NetworkSpec
from .agent.sac import SacConfig
from .env import EnvConfig
from .preprocess import NoiseSpec
from .sppo import MEASURES, SppoConfig

RL_REWARDS = ("pnl", "return")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    """One candle CSV per asset; ``paths`` are relative to the config file."""

    paths: tuple[str, ...] = ()
    symbols: tuple[str, ...] | None = None
    schema: dict | None = None
    delimiter: str = ","
    source_interval: float | None = None  # hours; inferred when omitted
    fill_gaps: bool = False
    train_steps: int = 2178
    test_steps: int = 732

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(str(p) for p in self.paths))
        if self.symbols is not None:
            object.__setattr__(self, "symbols", tuple(self.symbols))
            if len(self.symbols) != len(self.paths):
                raise ConfigError("data.symbols must list one symbol per path")
        if self.train_steps < 1 or self.test_steps < 1:
            raise ConfigError("train_steps and test_steps must be >= 1")


@dataclass(frozen=True)
class TrainBudget:
    episodes: int = 1
    max_updates: int | None = None
    max_seconds: float | None = None  # wall-clock cap; makes runs timing-dependent

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError("train.episodes must be >= 0")


def parse_strategy(name: str) -> tuple[str, str | None]:
    """``equal_weight``, ``sppo:<measure>`` or ``rl:<reward>`` -> (kind, variant)."""
    kind, _, variant = name.partition(":")
    if kind == "equal_weight" and not variant:
        return kind, None
    if kind == "sppo" and variant in MEASURES:
        return kind, variant
    if kind == "rl" and variant in RL_REWARDS:
        return kind, variant
    raise ConfigError(
        f"unknown strategy {name!r}; expected equal_weight, sppo:{{{'|'.join(MEASURES)}}} or rl:{{{'|'.join(RL_REWARDS)}}}"
    )


def strategy_slug(name: str) -> str:
    kind, variant = parse_strategy(name)
    return kind if variant is None else f"{kind}_{variant.lower()}"


DEFAULT_STRATEGIES = ("equal_weight", "sppo:MV", "sppo:MAD", "sppo:CVaR", "rl:pnl", "rl:return")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    sppo: SppoConfig = field(default_factory=SppoConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    train: TrainBudget = field(default_factory=TrainBudget)
    strategy: str = "equal_weight"
    strategies: tuple[str, ...] = DEFAULT_STRATEGIES
    seed: int = 0
    out: str = "runs"
    base_dir: str = "."  # directory relative paths resolve against

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        for s in (self.strategy, *self.strategies):
            parse_strategy(s)
        # the benchmark's cash utility must use the environment's lending terms
        sppo = dataclasses.replace(self.sppo, lend_rate=self.env.lend_rate, interval_hours=self.env.interval_hours)
        object.__setattr__(self, "sppo", sppo)

    def data_paths(self) -> list[Path]:
        return [self.resolve(p) for p in self.data.paths]

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def validate_files(self) -> None:
        if not self.data.paths:
            raise ConfigError("data.paths is empty")
        missing = [str(p) for p in self.data_paths() if not p.is_file()]
        if missing:
            raise ConfigError(f"data files not found: {missing}")


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _hints(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _build(cls, raw: Any, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    hints = _hints(cls)
    kw = {}
    for k, v in raw.items():
        t = hints[k]
        if dataclasses.is_dataclass(t):
            kw[k] = _build(t, v, f"{where}.{k}")
        elif isinstance(v, list):
            kw[k] = tuple(v)
        else:
            kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    raw = dict(raw or {})
    raw.setdefault("base_dir", str(base_dir))
    return _build(ExperimentConfig, raw, "config")


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Read YAML/JSON, apply dotted-key ``overrides`` and build the config."""
    raw: dict = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base = path.parent
    for key, value in (overrides or {}).items():
        node = raw
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return from_dict(raw, base)


def write_resolved(config: ExperimentConfig, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "resolved_config.json"
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def substream_seed(seed: int, name: str) -> int:
    """Independent 32-bit seed for a named component of one root seed."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream_seed(seed, name))
