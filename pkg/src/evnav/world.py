"""Ground-truth scene: ring on a rail, scripted ring motion and mocap sampling.

The physical rig drags the ring along an overhead cable. Here the cable is a
straight rail segment and the operator is replaced by a piecewise-constant
speed profile, so ring motion is a pure function of ``(profile, t)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import rotations
from .errors import ConfigError

SPEED_MIN = 0.05
SPEED_MAX = 0.50


def _vec(x):
    return np.asarray(x, dtype=float).reshape(3)


@dataclass(frozen=True)
class RingSpec:
    rail_start: np.ndarray = field(default_factory=lambda: np.array([-2.0, 0.0, 1.5]))
    rail_end: np.ndarray = field(default_factory=lambda: np.array([2.0, 0.0, 1.5]))
    ring_radius: float = 0.40
    tube_thickness: float = 0.03
    ring_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "rail_start", _vec(self.rail_start))
        object.__setattr__(self, "rail_end", _vec(self.rail_end))
        object.__setattr__(self, "ring_normal", _vec(self.ring_normal))
        if np.allclose(self.rail_start, self.rail_end, rtol=0, atol=0):
            raise ConfigError("rail_start and rail_end coincide")
        if not (self.ring_radius > self.tube_thickness > 0):
            raise ConfigError("need ring_radius > tube_thickness > 0")
        if abs(np.linalg.norm(self.ring_normal) - 1.0) > 1e-9:
            raise ConfigError("ring_normal must be a unit vector")
        if abs(float(self.ring_normal @ self.direction)) > 1e-9:
            raise ConfigError("ring_normal must be perpendicular to the rail")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.rail_end - self.rail_start))

    @property
    def direction(self) -> np.ndarray:
        d = self.rail_end - self.rail_start
        return d / np.linalg.norm(d)

    @property
    def plane_axes(self):
        """Orthonormal (along-rail, up-ish) basis of the ring plane."""
        e1 = self.direction
        e2 = np.cross(self.ring_normal, e1)
        if e2[2] < 0:
            e2 = -e2
        return e1, e2

    def point_at(self, s: float) -> np.ndarray:
        return self.rail_start + s * self.direction

    def to_dict(self):
        return {
            "rail_start": self.rail_start.tolist(),
            "rail_end": self.rail_end.tolist(),
            "ring_radius": self.ring_radius,
            "tube_thickness": self.tube_thickness,
            "ring_normal": self.ring_normal.tolist(),
        }


@dataclass(frozen=True)
class MotionProfile:
    """Piecewise-constant ring speed along the rail.

    ``segments`` is a sequence of ``(duration_s, signed_speed_mps)``; ``s0`` is
    the arc-length at t = 0.
    """

    segments: tuple
    seed: int = 0
    s0: float = 0.0

    def __post_init__(self):
        segs = tuple((float(d), float(v)) for d, v in self.segments)
        object.__setattr__(self, "segments", segs)
        for d, v in segs:
            if not d > 0:
                raise ConfigError(f"segment duration must be positive, got {d}")
            if v != 0.0 and not (SPEED_MIN - 1e-12 <= abs(v) <= SPEED_MAX + 1e-12):
                raise ConfigError(f"segment speed {v} outside [{SPEED_MIN}, {SPEED_MAX}] m/s")
        if self.s0 < 0:
            raise ConfigError("s0 must be non-negative")

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.segments)


def ring_arc_state(spec: RingSpec, profile: MotionProfile, t: float):
    """Return ``(s, velocity_s)`` along the rail at time ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    length = spec.length
    s = min(max(profile.s0, 0.0), length)
    t_seg = 0.0
    for duration, speed in profile.segments:
        if t < t_seg + duration:
            raw = s + speed * (t - t_seg)
            if 0.0 < raw < length:
                return raw, speed
            return min(max(raw, 0.0), length), 0.0
        s = min(max(s + speed * duration, 0.0), length)
        t_seg += duration
    return s, 0.0


def ring_state_at(spec: RingSpec, profile: MotionProfile, t: float):
    """Ring center (m) and velocity (m/s) in world coordinates at time ``t``."""
    s, vs = ring_arc_state(spec, profile, t)
    return spec.point_at(s), vs * spec.direction


def make_random_profile(seed: int, n_segments: int = 5, speed_bounds=(SPEED_MIN, SPEED_MAX),
                        duration_bounds=(1.0, 4.0), s0: float = 0.0) -> MotionProfile:
    lo, hi = (float(b) for b in speed_bounds)
    if not (SPEED_MIN <= lo <= hi <= SPEED_MAX):
        raise ConfigError(f"speed bounds {speed_bounds} outside [{SPEED_MIN}, {SPEED_MAX}]")
    dlo, dhi = (float(b) for b in duration_bounds)
    if not (0 < dlo <= dhi):
        raise ConfigError(f"invalid duration bounds {duration_bounds}")
    if n_segments < 1:
        raise ConfigError("need at least one segment")
    rng = np.random.default_rng(seed)
    speeds = rng.uniform(lo, hi, n_segments)
    signs = rng.choice([-1.0, 1.0], n_segments)
    durations = rng.uniform(dlo, dhi, n_segments)
    speeds = np.clip(speeds, SPEED_MIN, SPEED_MAX)
    segs = tuple((float(d), float(s * v)) for d, s, v in zip(durations, signs, speeds))
    return MotionProfile(segs, seed=seed, s0=s0)


class Subject(enum.Enum):
    drone = "drone"
    dvs_camera = "dvs_camera"


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: rotations.IDENTITY.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float).reshape(4))

    @property
    def rotation(self) -> np.ndarray:
        return rotations.to_matrix(self.orientation)


@dataclass(frozen=True)
class MocapSample:
    pose: Pose
    timestamp: float
    subject_id: Subject = Subject.drone


def sample_mocap(true_pose: Pose, noise_std_pos: float, noise_std_rot: float, latency: float,
                 rng: np.random.Generator, t_epoch: float,
                 subject: Subject = Subject.drone) -> MocapSample:
    """Noisy, back-dated pose measurement.

    The timestamp is the epoch minus the configured latency: the harness hands
    the sample out ``latency`` late, so it describes the world at that earlier
    instant.
    """
    if noise_std_pos < 0 or noise_std_rot < 0 or latency < 0:
        raise ValueError("noise and latency must be non-negative")
    dp = rng.normal(0.0, 1.0, 3) * noise_std_pos
    dr = rng.normal(0.0, 1.0, 3) * noise_std_rot
    if noise_std_pos == 0 and noise_std_rot == 0:
        pose = true_pose
    else:
        q = rotations.normalize(rotations.multiply(true_pose.orientation, rotations.from_rotvec(dr)))
        pose = Pose(true_pose.position + dp, q)
    return MocapSample(pose, t_epoch - latency, subject)
