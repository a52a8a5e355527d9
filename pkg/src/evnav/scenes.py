"""Synthetic event recordings of a ring sliding along the rail at constant speed.

Used by the perception checks, the experiment scripts and the ``record`` CLI
command. The speed here is unconstrained (the slow-object checks go below
the operator speed range), so positions are computed directly rather than
through a :class:`~evnav.world.MotionProfile`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .event_camera import EVENT_DTYPE, CameraIntrinsics, EventCamera, default_camera_pose, ring_image_geometry
from .perception import LifParams, RingTracker, TrackerConfig
from .world import Pose, RingSpec, Subject, sample_mocap


@dataclass
class RingSweep:
    events: np.ndarray
    speed: float  # m/s along the rail
    s0: float  # arc length at t = 0
    duration: float  # s
    spec: RingSpec
    pose: Pose
    intrinsics: CameraIntrinsics

    def center(self, t: float) -> np.ndarray:
        return self.spec.point_at(self.s0 + self.speed * t)

    def image_truth(self, t: float):
        """Projected ``(u, v, radius_px)`` of the ring centre-line at time ``t`` (s)."""
        u, v, rho, _ = ring_image_geometry(self.center(t), self.spec, self.pose, self.intrinsics)
        return u, v, rho


def record_ring_sweep(speed: float, duration: float, seed: int = 0, spec: RingSpec = RingSpec(),
                      intrinsics: CameraIntrinsics = CameraIntrinsics(), pose: Pose | None = None,
                      s0: float | None = None) -> RingSweep:
    """Render the sweep at the camera's sample rate and collect all events.

    ``seed`` only picks the start position (uniform over the rail with a 1 m
    margin) when ``s0`` is not given.
    """
    pose = default_camera_pose() if pose is None else pose
    if s0 is None:
        s0 = float(np.random.default_rng(seed).uniform(1.0, spec.length - 1.0))
    if not 0.0 <= s0 + speed * duration <= spec.length:
        raise ValueError("sweep leaves the rail")
    cam = EventCamera(intrinsics, pose, spec, np.random.default_rng(seed))
    step_us = int(round(1e6 / intrinsics.sample_rate))
    n = int(round(duration * 1e6 / step_us))
    chunks = []
    for k in range(n + 1):
        t_us = k * step_us
        ev = cam.advance(spec.point_at(s0 + speed * t_us * 1e-6), t_us)
        if ev.size:
            chunks.append(ev)
    events = np.concatenate(chunks) if chunks else np.empty(0, EVENT_DTYPE)
    return RingSweep(events, float(speed), float(s0), float(duration), spec, pose, intrinsics)


def track_sweep(sweep: RingSweep, noise_pos: float = 1e-3, noise_rot: float = np.radians(0.2),
                latency: float = 0.005, mocap_rate: float = 120.0, seed: int = 0,
                lif: LifParams = LifParams(), cfg: TrackerConfig = TrackerConfig(),
                feed_period_us: int = 10_000) -> RingTracker:
    """Replay a recorded sweep through a :class:`RingTracker` with a noisy camera mocap feed."""
    tracker = RingTracker(sweep.intrinsics, sweep.spec, lif, cfg)
    rng = np.random.default_rng(seed)
    ev = sweep.events
    end_us = int(round(sweep.duration * 1e6))
    next_mocap, idx = 0.0, 0
    for t_us in range(0, end_us + 1, feed_period_us):
        t = t_us * 1e-6
        while next_mocap <= t + 1e-12:
            tracker.add_camera_pose(sample_mocap(sweep.pose, noise_pos, noise_rot, latency, rng,
                                                 next_mocap + latency, Subject.dvs_camera))
            next_mocap += 1.0 / mocap_rate
        j = int(np.searchsorted(ev["t"], t_us, side="right"))
        tracker.feed(ev[idx:j], t_us)
        idx = j
    return tracker


def estimate_errors(sweep: RingSweep, tracker: RingTracker, settle: float = 0.5):
    """Median absolute rail-position (m) and rail-velocity (m/s) error of valid estimates after ``settle`` s."""
    hist = [e for e in tracker.history if e.valid and e.t >= settle]
    if not hist:
        return float("nan"), float("nan")
    pos = np.median([abs(e.s - (sweep.s0 + sweep.speed * e.t)) for e in hist])
    vel = np.median([abs(e.velocity_s - sweep.speed) for e in hist])
    return float(pos), float(vel)
