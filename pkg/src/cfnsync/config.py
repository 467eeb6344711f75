"""Run configuration: one JSON document covering every knob, validated
strictly (unknown keys rejected), with dotted-path command-line overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, get_type_hints

from .encoder import EncoderConfig
from .link import LinkConfig
from .nn import AdamConfig
from .server import ServerConfig
from .workload import WorkloadConfig


class ConfigError(ValueError):
    pass


@dataclass
class PolicyConfig:
    sn_policy: str = "semantic"
    ap_policy: str = "auto"
    fixed_period: float = 0.05
    qaoi_rate: float = 50.0
    qaoi_capacity: float = 50.0
    deviation_threshold: float = 0.2
    params_path: str = ""


@dataclass
class CalibrationThresholds:
    tau_max: float = 0.5       # seconds of tolerated cache age
    delta_warn: float = 0.5    # queue occupancy demanding an update
    delta_cong: float = 0.5    # queue occupancy forcing local execution
    eps_hyst: float = 0.05     # seconds of remote disadvantage before local

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"thresholds.{f.name} must be positive")


@dataclass
class LossWeights:
    lambda_r: float = 1.0
    lambda_ap: float = 1.2
    lambda_sem: float = 0.1
    lambda_inf: float = 1.0
    lambda_c: float = 0.1
    lambda_f: float = 0.5
    lambda_lat: float = 0.2

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"loss.{f.name} must be nonnegative")


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 256
    seed: int = 0


@dataclass
class CollectConfig:
    lambdas: list = field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0,
                                                   50.0, 55.0, 60.0])
    episodes_per_lambda: int = 1
    episode_len: float = 150.0
    epsilon: float = 0.1
    schedules: list = field(default_factory=lambda: ["always", "periodic:0.5", "periodic:1.0", "content"])
    seed: int = 1000


@dataclass
class CostConfig:
    p_fail: float = 5.0
    omega_up: float = 0.01
    omega_down: float = 0.05
    lambda_comm: float = 1.0
    lambda_sem: float = 0.1


@dataclass
class SweepConfig:
    lambdas: list = field(default_factory=lambda: [10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 55.0, 60.0])
    policies: list = field(default_factory=lambda: ["semantic", "fixed", "content", "qaoi"])
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    workers: int = 2


@dataclass
class AblationConfig:
    d_sem_list: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    lambda_in: float = 50.0
    seeds: list = field(default_factory=lambda: [1, 2, 3])


@dataclass
class RunConfig:
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    ap: ServerConfig = field(default_factory=lambda: ServerConfig(2, 0.8e9, 25))
    sn: ServerConfig = field(default_factory=lambda: ServerConfig(4, 1.0e9, 100))
    link: LinkConfig = field(default_factory=LinkConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    slot_dt: float = 0.01
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    thresholds: CalibrationThresholds = field(default_factory=CalibrationThresholds)
    loss: LossWeights = field(default_factory=LossWeights)
    adam: AdamConfig = field(default_factory=AdamConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    collect: CollectConfig = field(default_factory=CollectConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> "RunConfig":
        self.workload.validate()
        self.ap.validate()
        self.sn.validate()
        self.link.validate()
        self.encoder.validate()
        self.thresholds.validate()
        self.loss.validate()
        self.adam.validate()
        if self.slot_dt <= 0:
            raise ConfigError("slot_dt must be positive")
        if abs(round(1.0 / self.slot_dt) - 1.0 / self.slot_dt) > 1e-9:
            raise ConfigError("slot_dt must divide one second evenly")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def copy(self) -> "RunConfig":
        return _build(RunConfig, self.to_dict(), "")


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object at {path or 'top level'}")
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} at {path or 'top level'}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        hint = hints[f.name]
        sub = f"{path}.{f.name}" if path else f.name
        if is_dataclass(hint):
            kwargs[f.name] = _build(hint, value, sub)
        elif hint is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{sub}: expected a number")
            kwargs[f.name] = float(value)
        elif hint is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{sub}: expected an integer")
            kwargs[f.name] = value
        elif hint is str:
            if not isinstance(value, str):
                raise ConfigError(f"{sub}: expected a string")
            kwargs[f.name] = value
        elif hint is list:
            if not isinstance(value, list):
                raise ConfigError(f"{sub}: expected a list")
            kwargs[f.name] = list(value)
        else:
            kwargs[f.name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "").validate()


def load_config(path: str | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Loads JSON config (defaults when path is None) and applies
    `dotted.key=json_value` overrides."""
    data: dict = {}
    if path is not None:
        with open(path) as f:
            data = json.load(f)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} walks through a non-object")
        node[parts[-1]] = value
    return config_from_dict(data)
