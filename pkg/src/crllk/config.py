"""Run configuration: one flat-ish dataclass, JSON in and out, dotted-path
overrides. Every value a run depends on lives here so that a persisted
config.json fully determines the run."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .simulator import EnvConfig
from .trainer import (
    Gains,
    LagrangeState,
    MODE_NAMES,
    NetConfig,
    PPOConfig,
    TrainMode,
)
from .rollout import WorkerSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs.

    Reference defaults: horizon 512 (env.horizon), gamma 0.95 (ppo.gamma),
    eta1=eta2=eta3=2e-5, eta4=1e-5, workers 4, eval_episodes 100,
    eval_seeds 2.
    """

    mode: str = "crllk_discrete"
    track: str = "small_loop"
    iterations: int = 200
    workers: int = 4
    episodes_per_worker: int = 4
    base_seed: int = 0
    alpha1: float = 0.5
    alpha2: float = 0.02
    alpha3: float = 0.1
    eta1: float = 2e-5
    eta2: float = 2e-5
    eta3: float = 2e-5
    eta4: float = 1e-5
    lambda_init: tuple[float, float, float] = (1.0, 1.0, 1.0)
    lambda_sign: str = "dual_ascent"
    eval_episodes: int = 100
    eval_seeds: int = 2
    eval_stochastic: bool = False
    checkpoint_interval: int = 50
    out_dir: str = "runs"
    run_name: str = ""
    env: EnvConfig = EnvConfig()
    ppo: PPOConfig = PPOConfig()
    net: NetConfig = NetConfig()
    gains: Gains = Gains()

    def __post_init__(self):
        if self.mode not in MODE_NAMES:
            raise ConfigError(f"mode: unknown mode {self.mode!r}, expected one of {MODE_NAMES}")
        if self.iterations < 0:
            raise ConfigError(f"iterations: must be >= 0, got {self.iterations}")
        if self.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {self.workers}")
        if self.episodes_per_worker < 1:
            raise ConfigError(
                f"episodes_per_worker: must be >= 1, got {self.episodes_per_worker}"
            )
        if self.eval_episodes < 1 or self.eval_seeds < 1:
            raise ConfigError("eval_episodes and eval_seeds must be >= 1")
        if self.checkpoint_interval < 1:
            raise ConfigError(
                f"checkpoint_interval: must be >= 1, got {self.checkpoint_interval}"
            )
        if len(self.lambda_init) != 3 or any(v < 0 for v in self.lambda_init):
            raise ConfigError(
                f"lambda_init: need three nonnegative values, got {self.lambda_init}"
            )
        if self.lambda_sign not in ("dual_ascent", "as_printed"):
            raise ConfigError(
                f"lambda_sign: expected 'dual_ascent' or 'as_printed', got {self.lambda_sign!r}"
            )
        for name in ("alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0, got {getattr(self, name)}")
        for name in ("eta1", "eta2", "eta3", "eta4"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be > 0, got {getattr(self, name)}")

    # -- derived objects ---------------------------------------------------

    def train_mode(self) -> TrainMode:
        return TrainMode(name=self.mode, gains=self.gains)

    def lagrange(self) -> LagrangeState:
        mode = self.train_mode()
        lam = self.lambda_init if mode.adaptive else (1.0, 1.0, 1.0)
        return LagrangeState(
            lambda1=lam[0],
            lambda2=lam[1],
            lambda3=lam[2],
            alpha1=self.alpha1,
            alpha2=self.alpha2,
            alpha3=self.alpha3,
            eta1=self.eta1,
            eta2=self.eta2,
            eta3_policy=self.eta3,
            eta4_critic=self.eta4,
            lambda_sign=self.lambda_sign,
        )

    def worker_spec(self) -> WorkerSpec:
        return WorkerSpec(
            worker_count=self.workers,
            episodes_per_worker=self.episodes_per_worker,
            base_seed=self.base_seed,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED: dict[str, type] = {"env": EnvConfig, "ppo": PPOConfig, "net": NetConfig, "gains": Gains}


def _tuplify(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build_dataclass(cls: type, data: dict, path: str) -> Any:
    valid = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in data.items():
        where = f"{path}{key}"
        if key not in valid:
            raise ConfigError(f"unknown config key {where!r}")
        sub = _NESTED.get(key) if cls is RunConfig else None
        if sub is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected an object, got {type(val).__name__}")
            kwargs[key] = _build_dataclass(sub, val, where + ".")
        else:
            kwargs[key] = _tuplify(val)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    return _build_dataclass(RunConfig, data, "")


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON (line {exc.lineno})") from exc
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings stay strings
    return key, value


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply `--set key.path=value` assignments; values parse as JSON with a
    plain-string fallback."""
    if not overrides:
        return cfg
    data = cfg.to_dict()
    for text in overrides:
        key, value = _parse_override(text)
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config key {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return config_from_dict(data)
