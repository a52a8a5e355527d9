"""Simulation configuration tree with strict JSON round-tripping."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..controller import ControllerConfig, SafetyEnvelope
from ..dynamics import QuadParams
from ..errors import ConfigError
from ..event_camera import CameraIntrinsics
from ..perception import LifParams, TrackerConfig
from ..planner.loss import LossWeights
from ..planner.train import TrainConfig
from ..planner.trajectory import PlannerConfig
from ..world import SPEED_MAX, SPEED_MIN, RingSpec

MODES = ("ideal", "realistic")


@dataclass(frozen=True)
class Rates:
    dynamics: float = 1000.0
    camera: float = 1000.0
    perception_window_ms: float = 10.0
    outer: float = 100.0
    inner: float = 500.0
    replan: float = 10.0
    mocap: float = 120.0
    log: float = 100.0

    def __post_init__(self):
        vals = dataclasses.astuple(self)
        if min(vals) <= 0:
            raise ConfigError("rates must be positive")
        others = (self.camera, self.outer, self.inner, self.replan, self.mocap, self.log)
        if max(others) > self.dynamics:
            raise ConfigError("dynamics rate must be at least every other rate")
        for name in ("camera", "outer", "inner", "replan", "log"):
            ratio = self.dynamics / getattr(self, name)
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(f"{name} rate must divide the dynamics rate")


@dataclass(frozen=True)
class MotionConfig:
    kind: str = "random"  # "random" or "constant"
    speed: float = 0.25  # signed speed for the constant kind
    n_segments: int = 5
    speed_bounds: tuple = (SPEED_MIN, SPEED_MAX)
    duration_bounds: tuple = (2.0, 5.0)
    s0: float | None = None  # None: rail middle, or centred on the expected crossing

    def __post_init__(self):
        if self.kind not in ("random", "constant"):
            raise ConfigError(f"unknown motion kind {self.kind!r}")
        if self.kind == "constant" and not SPEED_MIN - 1e-12 <= abs(self.speed) <= SPEED_MAX + 1e-12:
            raise ConfigError(f"constant speed {self.speed} outside [{SPEED_MIN}, {SPEED_MAX}]")


@dataclass(frozen=True)
class MocapConfig:
    noise_pos: float = 1e-3  # m
    noise_rot: float = math.radians(0.2)  # rad
    latency: float = 0.005  # s
    velocity_alpha: float = 0.35  # EMA weight of finite-difference velocity


@dataclass(frozen=True)
class LinkConfig:
    latency_mean: float = 0.020
    latency_jitter_std: float = 0.005
    drop_probability: float = 0.01

    def __post_init__(self):
        if not 0 <= self.drop_probability < 1 or self.latency_mean < 0 or self.latency_jitter_std < 0:
            raise ConfigError("invalid link parameters")


@dataclass(frozen=True)
class MotorConfig:
    thrust_noise_std: float = 0.01
    noise_correlation_time: float = 0.05  # s; 0 gives white noise per dynamics step


@dataclass(frozen=True)
class MissionConfig:
    hover_point: tuple = (0.0, -1.5, 1.5)
    start_point: tuple = (0.0, -1.5, 0.05)
    ground_height: float = 0.05  # body-centre height when resting on the landing gear
    trigger_bounds: tuple = (2.0, 6.0)  # s after Track entry
    replan_cutoff: float = 0.3  # s before the crossing
    land_hold: float = 0.5  # s spent in Land before the run ends
    abort_descent_rate: float = 0.5  # m/s
    clearance_success: float = 0.05  # m

    def __post_init__(self):
        lo, hi = self.trigger_bounds
        if not 0 <= lo <= hi:
            raise ConfigError("invalid trigger bounds")


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    mode: str = "realistic"
    duration: float = 40.0
    rates: Rates = Rates()
    ring: RingSpec = field(default_factory=RingSpec)
    motion: MotionConfig = MotionConfig()
    camera: CameraIntrinsics = CameraIntrinsics()
    lif: LifParams = LifParams()
    tracker: TrackerConfig = TrackerConfig()
    mocap: MocapConfig = MocapConfig()
    link: LinkConfig = LinkConfig()
    quad: QuadParams = QuadParams()
    motor: MotorConfig = MotorConfig()
    controller: ControllerConfig = ControllerConfig()
    envelope: SafetyEnvelope = SafetyEnvelope()
    planner: PlannerConfig = PlannerConfig()
    loss_weights: LossWeights = LossWeights()
    training: TrainConfig = TrainConfig()
    mission: MissionConfig = MissionConfig()
    planner_params: str | None = None  # CSV path; None uses the packaged parameters

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.duration < 0:
            raise ConfigError("duration must be non-negative")
        if abs(self.rates.perception_window_ms - self.tracker.window_ms) > 1e-12:
            raise ConfigError("rates.perception_window_ms and tracker.window_ms disagree")


def _to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return [float(v) for v in obj]
    if isinstance(obj, (tuple, list)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def config_to_dict(cfg) -> dict:
    return _to_jsonable(cfg)


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a JSON object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _convert(hints.get(name), value, f"{path}.{name}" if path else name)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def _convert(hint, value, path):
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    if value in ("inf", "-inf"):
        return float(value)
    if isinstance(value, list):
        return tuple(_convert(None, v, path) for v in value)
    return value


def config_from_dict(data: dict) -> SimConfig:
    return _build(SimConfig, data, "")


def load_config(path) -> SimConfig:
    if path is None:
        return SimConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def config_hash(cfg: SimConfig) -> str:
    """SHA-256 of the canonical config JSON with the run mode removed."""
    d = config_to_dict(cfg)
    d.pop("mode")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
