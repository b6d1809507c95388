"""Run configuration: nested dataclasses with JSON round-trip and strict validation."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

METHODS = ("standard", "replay", "rmrl", "pretrained-rmrl")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class ActionGrid:
    """Symmetric candidate-adjustment grids for dx, dy (meters) and dpsi (radians)."""

    x_half: float = 0.010
    y_half: float = 0.010
    psi_half: float = math.radians(4.0)
    n_x: int = 11
    n_y: int = 11
    n_psi: int = 9

    def validate(self):
        for name in ("n_x", "n_y", "n_psi"):
            if getattr(self, name) < 1:
                raise ConfigError(f"grid.{name} must be >= 1")
        for name in ("x_half", "y_half", "psi_half"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"grid.{name} must be >= 0")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_y, self.n_psi)

    @property
    def half_ranges(self) -> tuple[float, float, float]:
        return (self.x_half, self.y_half, self.psi_half)

    def axis_values(self, axis: int) -> np.ndarray:
        n, half = self.sizes[axis], self.half_ranges[axis]
        if n == 1:
            return np.zeros(1)
        step = 2.0 * half / (n - 1)
        return (np.arange(n) - (n - 1) / 2) * step

    def values(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(self.axis_values(a) for a in range(3))

    def step_sizes(self) -> tuple[float, float, float]:
        return tuple(
            2.0 * h / (n - 1) if n > 1 else 0.0 for h, n in zip(self.half_ranges, self.sizes)
        )

    def zero_index(self) -> tuple[int, int, int]:
        """Index triple of the grid point nearest to no adjustment."""
        return tuple(int(np.argmin(np.abs(v))) for v in self.values())


@dataclass(frozen=True)
class EnvConfig:
    grid: ActionGrid = field(default_factory=ActionGrid)
    # per-component bias half-ranges; None means "use the grid half-ranges"
    bias_range: tuple[float, float, float] | None = None
    sigma_obs_trans: float = 0.0005
    sigma_obs_rot: float = math.radians(0.2)
    sigma_exec_trans: float = 0.0005
    sigma_exec_rot: float = math.radians(0.2)
    sigma_feat: float = 0.05
    feature_dim: int = 16
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def bias_half_ranges(self) -> tuple[float, float, float]:
        return self.grid.half_ranges if self.bias_range is None else tuple(self.bias_range)

    def validate(self):
        self.grid.validate()
        if self.feature_dim < 1:
            raise ConfigError("env.feature_dim must be >= 1")
        for name in ("sigma_obs_trans", "sigma_obs_rot", "sigma_exec_trans", "sigma_exec_rot", "sigma_feat"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"env.{name} must be >= 0")
        if len(self.bias_half_ranges) != 3:
            raise ConfigError("env.bias_range must have three components")
        for b, h, name in zip(self.bias_half_ranges, self.grid.half_ranges, ("x", "y", "psi")):
            if not 0 <= b <= h + 1e-12:
                raise ConfigError(
                    f"env.bias_range[{name}]={b} must lie within the grid half-range {h}"
                )
        if len(self.target) != 3:
            raise ConfigError("env.target must be [x, y, psi]")


@dataclass(frozen=True)
class PolicyConfig:
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    init_scale: float = 0.05
    trunk_init: str = "glorot"

    def validate(self):
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("policy.hidden_dims entries must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.trunk_init not in ("uniform", "glorot"):
            raise ConfigError(f"unknown policy.trunk_init {self.trunk_init!r}")
        if not self.init_scale >= 0:
            raise ConfigError("policy.init_scale must be >= 0")


@dataclass(frozen=True)
class ScheduleConfig:
    steps_per_scene: int = 5
    offline_epochs_scene: int = 3
    replay_interval: int = 5
    replay_epochs: int = 2
    replay_batch: int = 16
    total_scenes: int = 60
    lr_online: float = 0.05
    lr_offline: float = 0.01
    lr_pretrain: float = 0.05
    replay_capacity: int = 1000
    pretrain_samples: int = 200
    pretrain_epochs: int = 200
    pretrain_jitter: int = 1
    pretrain_records_per_scene: int = 1

    def validate(self):
        for name in ("steps_per_scene", "offline_epochs_scene", "replay_interval",
                     "replay_epochs", "replay_batch", "total_scenes", "pretrain_samples",
                     "pretrain_records_per_scene"):
            if getattr(self, name) < 1:
                raise ConfigError(f"schedule.{name} must be >= 1")
        if self.replay_interval > self.total_scenes:
            raise ConfigError("schedule.replay_interval must not exceed total_scenes")
        for name in ("replay_capacity", "pretrain_epochs", "pretrain_jitter"):
            if getattr(self, name) < 0:
                raise ConfigError(f"schedule.{name} must be >= 0")
        for name in ("lr_online", "lr_offline", "lr_pretrain"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"schedule.{name} must be >= 0")


@dataclass(frozen=True)
class MetricsConfig:
    # reward at exactly the success tolerances below: exp(-(0.003 + 1 - cos 1deg))
    tau: float = 0.996853
    ema_alpha: float = 0.1
    success_trans_mm: float = 3.0
    success_rot_deg: float = 1.0
    eval_scenes: int = 10

    def validate(self):
        if not 0 < self.tau < 1:
            raise ConfigError("metrics.tau must lie in (0, 1)")
        if not 0 < self.ema_alpha <= 1:
            raise ConfigError("metrics.ema_alpha must lie in (0, 1]")
        if self.eval_scenes < 1:
            raise ConfigError("metrics.eval_scenes must be >= 1")
        if self.success_trans_mm < 0 or self.success_rot_deg < 0:
            raise ConfigError("success thresholds must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0
    out_dir: str = "runs"

    def validate(self) -> "RunConfig":
        self.env.validate()
        self.policy.validate()
        self.schedule.validate()
        self.metrics.validate()
        return self

    def replace(self, **sections) -> "RunConfig":
        """Shallow helper: ``cfg.replace(schedule={"total_scenes": 3}, seed=4)``."""
        updates = {}
        for key, value in sections.items():
            current = getattr(self, key)
            if isinstance(value, dict):
                if key == "env" and "grid" in value and isinstance(value["grid"], dict):
                    value = dict(value, grid=dataclasses.replace(current.grid, **value["grid"]))
                value = dataclasses.replace(current, **value)
            updates[key] = value
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = _build(cls, data, "")
        try:
            return cfg.validate()
        except TypeError as exc:
            raise ConfigError(f"config value has the wrong type ({exc})") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)


def _build(cls, data, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
