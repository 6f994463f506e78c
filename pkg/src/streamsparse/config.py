"""Pipeline configuration: defaults < config file (key = value) < CLI flags."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .interpolation import PlanConfig
from .sparsity import SparsityConfig
from .synthesis import SynthesisConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    n_spans: int = 10
    dense_threshold: int = 5
    so_threshold: int = 10
    floor: int = 10
    K: int = 5
    N: int = 5
    M: int = 5
    seed: int = 0
    backend: str = "mock"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    template_dir: str = ""
    max_in_flight: int = 4
    workers: int = 1

    def __post_init__(self):
        for name in ("n_spans", "floor", "K", "N", "M", "max_in_flight", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("dense_threshold", "so_threshold"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.backend not in ("mock", "remote"):
            raise ConfigError(f"unknown backend {self.backend!r}")

    def sparsity(self) -> SparsityConfig:
        return SparsityConfig(self.dense_threshold, self.so_threshold, self.seed)

    def plan(self) -> PlanConfig:
        return PlanConfig(self.floor, self.seed)

    def synthesis(self) -> SynthesisConfig:
        return SynthesisConfig(K=self.K, N=self.N, M=self.M, seed=self.seed, workers=self.workers)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _coerce(name: str, value):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    if _FIELDS[name].type in ("int", int):
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name} expects an integer, got {value!r}") from None
    return str(value)


def read_config_file(path: str | Path) -> dict:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[pipeline]\n" + text, source=str(path))
    return {k: _coerce(k, v) for k, v in parser["pipeline"].items()}


def build_config(path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    values = read_config_file(path) if path else {}
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _coerce(k, v)
    return PipelineConfig(**values)
