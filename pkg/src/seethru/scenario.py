"""Scenario configuration: a nested, YAML-loadable description of one run.

Every randomized component is seeded from the per-run seed, so a config plus
a seed list pins the whole experiment. Field names are stable: they are the
dotted paths the sweep command resolves.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import yaml

from .registration import RegistrationConfig
from . import registration
from .worldsim import PRESETS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DriftParams:
    trans_per_meter: float = 0.01
    yaw_per_radian: float = 0.01


@dataclass(frozen=True)
class DetectionParams:
    center_sigma: float = 0.05
    yaw_sigma_deg: float = 3.0
    size_sigma_frac: float = 0.03
    miss_probability: float = 0.05
    false_positive_rate: float = 0.05
    min_visible_points: int = 20


@dataclass(frozen=True)
class ChannelParams:
    base_latency: float = 0.018
    jitter: float = 0.004
    drop_probability: float = 0.0
    in_order: bool = True


@dataclass(frozen=True)
class LatencyParams:
    slam: float = 0.028   # robot scan in -> detections out, seconds
    viz: float = 0.014    # receive -> overlay emitted, seconds


@dataclass(frozen=True)
class ClockParams:
    fpv_offset: float = 0.35
    fpv_drift_rate: float = 0.0
    sync_exchanges: int = 32


@dataclass(frozen=True)
class DisplayParams:
    width: int = 320
    height: int = 240
    h_fov_deg: float = 70.0


@dataclass(frozen=True)
class RegistrationParams:
    epsilon_max: float = 0.04
    eta_min: float = 0.72
    delta_max: float = 1e-3
    lambda_deg: float = 5e-4
    trim_fraction: float = 0.92
    yaw_step_deg: float = 30.0
    max_iterations: int = 30
    radius: float = 0.5
    huber_delta: float = 0.05
    window: float = 1.0          # FPV aggregation window, seconds
    scan_leaf: float = 0.10
    z_band: tuple[float, float] = (0.35, 2.65)

    def to_config(self) -> RegistrationConfig:
        return RegistrationConfig(
            epsilon_max=self.epsilon_max, eta_min=self.eta_min,
            delta_max=self.delta_max, lambda_deg=self.lambda_deg,
            trim_fraction=self.trim_fraction, yaw_step_deg=self.yaw_step_deg,
            max_iterations=self.max_iterations, radius=self.radius,
            huber_delta=self.huber_delta,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    preset: str = "corridor_door"
    seeds: tuple[int, ...] = (0,)
    duration: float = 12.5            # stream phase length, seconds
    frame_rate: float = 2.5           # robot detection / overlay cadence, Hz
    mapping_scan_period: float = 0.8
    map_leaf: float = 0.10
    z_ground_band: float = 0.30
    z_ceiling_margin: float = 0.30
    robot_drift: DriftParams = field(default_factory=lambda: DriftParams(0.0008, 0.0008))
    fpv_drift: DriftParams = field(default_factory=lambda: DriftParams(0.004, 0.004))
    detection: DetectionParams = field(default_factory=DetectionParams)
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    latency: LatencyParams = field(default_factory=LatencyParams)
    clocks: ClockParams = field(default_factory=ClockParams)
    display: DisplayParams = field(default_factory=DisplayParams)
    box_inflation: float = 0.05
    verify_period: float = 1.0        # seconds of motion between drift probes
    verify_distance: float = 1.0      # meters traveled between drift probes
    anchor_hint_grid: float = 0.5     # deployment-hint quantization, meters
    perfect_poses: bool = False       # bypass estimation: truth poses end to end
    sensor_range_sigma: float | None = None  # override both sensors' range noise

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if self.duration <= 0 or self.frame_rate <= 0:
            raise ConfigError("duration and frame rate must be positive")


def _from_dict(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {path + key!r}")
        if is_dataclass(_field_class(cls, key)):
            kwargs[key] = _from_dict(_field_class(cls, key), value, f"{path}{key}.")
        elif key == "seeds":
            kwargs[key] = tuple(int(s) for s in value)
        elif key == "z_band":
            kwargs[key] = tuple(float(v) for v in value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path or cls.__name__}: {err}") from err


def _field_class(cls, name):
    for f in fields(cls):
        if f.name == name:
            default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
            return type(default) if is_dataclass(default) else None
    return None


def to_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if is_dataclass(v):
            out[f.name] = to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def load_config(path) -> ScenarioConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse {path}: {err}") from err
    if data is None:
        data = {}
    return _from_dict(ScenarioConfig, data)


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(to_dict(cfg), sort_keys=True))


def override_path(cfg, dotted: str, value):
    """Return a copy of `cfg` with the dotted parameter path replaced."""
    head, _, rest = dotted.partition(".")
    if not hasattr(cfg, head):
        raise ConfigError(f"no config field {dotted!r}")
    if rest:
        child = getattr(cfg, head)
        if not is_dataclass(child):
            raise ConfigError(f"{head!r} is not a nested config")
        return replace(cfg, **{head: override_path(child, rest, value)})
    current = getattr(cfg, head)
    if isinstance(current, tuple) and not isinstance(value, tuple):
        value = tuple(value) if isinstance(value, (list, set)) else (value,)
    elif isinstance(current, bool):
        value = bool(value)
    elif isinstance(current, int) and not isinstance(value, bool) and not isinstance(current, bool):
        value = type(current)(value)
    elif isinstance(current, float):
        value = float(value)
    return replace(cfg, **{head: value})
