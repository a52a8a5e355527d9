"""Two-segment quintic traversal trajectories.

Segment 1 runs from the start state to the crossing waypoint in the ring plane,
segment 2 from the crossing to a hover point beyond the ring. Each axis is a
quintic in local time with position, velocity and acceleration pinned at both
ends, so the junction is C2 by construction.

The batched builder works on torch tensors so that gradients flow from the
network heads through the geometry into the loss; :func:`build_trajectory` is
the single-scenario numpy-facing wrapper used at run time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import InfeasiblePlanError
from ..world import RingSpec


@dataclass(frozen=True)
class PlannerConfig:
    t_min: float = 0.5
    r_margin: float = 0.25
    v_cross: float = 0.5
    d_exit: float = 0.8
    t_exit: float = 1.5
    drone_radius: float = 0.25
    clearance_required: float = 0.05
    tilt_max: float = math.radians(30.0)
    thrust_min_ratio: float = 0.3
    thrust_max_ratio: float = 1.8
    speed_max: float = 1.5  # m/s, plan speed hinge
    rail_slack: float = 0.5
    quadrature_points: int = 50


def quintic_coefficients(p0, v0, a0, p1, v1, a1, T):
    """Ascending-power coefficients of the quintic meeting both boundary triples.

    Works elementwise on numpy arrays or torch tensors; ``T`` broadcasts
    against the boundary values. Returns a tuple ``(c0, ..., c5)``.
    """
    dp = p1 - p0
    T2 = T * T
    T3 = T2 * T
    c3 = (20 * dp - (8 * v1 + 12 * v0) * T - (3 * a0 - a1) * T2) / (2 * T3)
    c4 = (-30 * dp + (14 * v1 + 16 * v0) * T + (3 * a0 - 2 * a1) * T2) / (2 * T3 * T)
    c5 = (12 * dp - 6 * (v1 + v0) * T - (a0 - a1) * T2) / (2 * T3 * T2)
    return p0, v0, 0.5 * a0, c3, c4, c5


def _stack(cs):
    if isinstance(cs[0], torch.Tensor):
        return torch.stack(cs, dim=-1)
    return np.stack(cs, axis=-1)


def derivative_coefficients(c, order: int):
    """Coefficients of the ``order``-th derivative, padded to the same length."""
    for _ in range(order):
        n = c.shape[-1]
        k = torch.arange(1, n, dtype=c.dtype) if isinstance(c, torch.Tensor) else np.arange(1, n)
        d = c[..., 1:] * k
        pad = torch.zeros_like(c[..., :1]) if isinstance(c, torch.Tensor) else np.zeros_like(c[..., :1])
        c = torch.cat([d, pad], dim=-1) if isinstance(c, torch.Tensor) else np.concatenate([d, pad], axis=-1)
    return c


@dataclass
class TrajectoryBatch:
    """Torch tensors describing B two-segment trajectories."""

    coeffs: torch.Tensor  # (B, 2, 3, 6)
    durations: torch.Tensor  # (B, 2)
    crossing: torch.Tensor  # (B, 3)
    offset: torch.Tensor  # (B, 2)
    crossing_s: torch.Tensor  # (B,)
    raw_crossing_s: torch.Tensor  # (B,)
    direction: torch.Tensor  # (B, 3) unit normal oriented along travel
    exit_point: torch.Tensor  # (B, 3)


def _t(x):
    return torch.as_tensor(np.asarray(x, dtype=float))


def build_batch(p0, v0, a0, ring_s, ring_vs, T, offset, spec: RingSpec, cfg: PlannerConfig) -> TrajectoryBatch:
    """Batched trajectory construction; all inputs are (B, ...) tensors."""
    rail0, rail_dir = _t(spec.rail_start), _t(spec.direction)
    e1, e2 = (_t(e) for e in spec.plane_axes)
    normal = _t(spec.ring_normal)
    raw_s = ring_s + ring_vs * T
    s = torch.clamp(raw_s, 0.0, spec.length)
    crossing = rail0 + s[:, None] * rail_dir + offset[:, :1] * e1 + offset[:, 1:2] * e2
    side = torch.sign(((crossing - p0) @ normal).detach())
    side = torch.where(side == 0, torch.ones_like(side), side)
    direction = side[:, None] * normal
    v_cross = cfg.v_cross * direction
    zero = torch.zeros_like(p0)
    exit_point = crossing + cfg.d_exit * direction
    T1 = T[:, None]
    T2 = torch.full_like(T1, cfg.t_exit)
    seg1 = _stack(list(quintic_coefficients(p0, v0, a0, crossing, v_cross, zero, T1)))
    seg2 = _stack(list(quintic_coefficients(crossing, v_cross, zero, exit_point, zero, zero, T2)))
    coeffs = torch.stack([seg1, seg2], dim=1)
    durations = torch.cat([T1, T2], dim=1)
    return TrajectoryBatch(coeffs, durations, crossing, offset, s, raw_s, direction, exit_point)


@dataclass(frozen=True)
class TrajectorySpec:
    t0: float
    durations: tuple  # (T, T_exit)
    coeffs: np.ndarray  # (2, 3, 6) ascending powers in segment-local time
    crossing_point: np.ndarray
    crossing_velocity: np.ndarray
    exit_point: np.ndarray
    offset: np.ndarray
    crossing_s: float

    @property
    def t_cross(self) -> float:
        return self.t0 + self.durations[0]

    @property
    def t_end(self) -> float:
        return self.t0 + self.durations[0] + self.durations[1]

    @property
    def duration(self) -> float:
        return self.durations[0] + self.durations[1]

    @classmethod
    def from_batch(cls, batch: TrajectoryBatch, t0: float, cfg: PlannerConfig, i: int = 0):
        d = batch.direction[i].detach().numpy()
        return cls(float(t0), tuple(float(x) for x in batch.durations[i].detach()),
                   batch.coeffs[i].detach().numpy().copy(), batch.crossing[i].detach().numpy().copy(),
                   cfg.v_cross * d, batch.exit_point[i].detach().numpy().copy(),
                   batch.offset[i].detach().numpy().copy(), float(batch.crossing_s[i]))


def build_trajectory(start_p, start_v, ring_s: float, ring_vs: float, T: float, offset,
                     spec: RingSpec, cfg: PlannerConfig = PlannerConfig(), t0: float = 0.0,
                     start_a=None, strict: bool = True) -> TrajectorySpec:
    """Plan from a start state through the predicted ring crossing to the exit hover.

    Raises :class:`InfeasiblePlanError` when the constant-velocity prediction
    of the ring leaves the rail by more than ``cfg.rail_slack``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    raw = ring_s + ring_vs * T
    if strict and (raw < -cfg.rail_slack or raw > spec.length + cfg.rail_slack):
        raise InfeasiblePlanError(f"predicted crossing at s={raw:.3f} m is off the rail")
    a0 = np.zeros(3) if start_a is None else start_a
    batch = build_batch(_t(start_p)[None], _t(start_v)[None], _t(a0)[None], _t([ring_s]), _t([ring_vs]),
                        _t([T]), _t(offset).reshape(1, 2), spec, cfg)
    return TrajectorySpec.from_batch(batch, t0, cfg)


def _powers(tau: float) -> np.ndarray:
    return tau ** np.arange(6)


def sample_setpoint(traj: TrajectorySpec, t: float):
    """``(position, velocity, acceleration, clamped)`` at absolute time ``t``."""
    clamped = t < traj.t0 or t > traj.t_end
    t = min(max(t, traj.t0), traj.t_end)
    local = t - traj.t0
    seg = 0 if local < traj.durations[0] else 1
    if seg == 1:
        local = min(local - traj.durations[0], traj.durations[1])
    c = traj.coeffs[seg]
    k = np.arange(6)
    pw = local ** k
    pos = c @ pw
    vel = c[:, 1:] @ (k[1:] * local ** k[:-1])
    acc = c[:, 2:] @ (k[2:] * k[1:-1] * local ** k[:-2])
    return pos, vel, acc, clamped
