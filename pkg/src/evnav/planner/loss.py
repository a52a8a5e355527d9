"""Physics-guided trajectory loss: flatness energy, ring clearance, feasibility."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch

from ..dynamics import QuadParams
from .trajectory import PlannerConfig, TrajectoryBatch, derivative_coefficients


@dataclass(frozen=True)
class LossWeights:
    energy: float = 1.0
    collision: float = 50.0
    feasibility: float = 1000.0

    def __post_init__(self):
        if min(self.energy, self.collision, self.feasibility) < 0:
            raise ValueError("loss weights must be non-negative")


def flat_thrust(acc, params: QuadParams):
    """Collective thrust ``m * |a + g z|`` implied by an acceleration (numpy)."""
    a = np.asarray(acc, dtype=float)
    f = a + np.array([0.0, 0.0, params.g])
    return params.mass * np.linalg.norm(f, axis=-1)


def flat_power(acc, params: QuadParams):
    """Rotor power with four equal rotors sharing the flatness thrust (numpy)."""
    w = np.sqrt(flat_thrust(acc, params) / (4.0 * params.k_f))
    return 4.0 * params.k_p * w ** 3


@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return torch.from_numpy(x), torch.from_numpy(w)


def _hinge2(x):
    return torch.clamp(x, min=0.0) ** 2


def loss_terms(batch: TrajectoryBatch, spec, params: QuadParams, cfg: PlannerConfig):
    """Per-scenario ``(E, C, F)`` tensors of shape (B,)."""
    x, w = _gauss_legendre(cfg.quadrature_points)
    m, g = params.mass, params.g
    f_lo = cfg.thrust_min_ratio * m * g
    f_hi = cfg.thrust_max_ratio * m * g
    energy = 0.0
    feas = 0.0
    for seg in range(2):
        c = batch.coeffs[:, seg]  # (B, 3, 6)
        T = batch.durations[:, seg]  # (B,)
        tau = 0.5 * T[:, None] * (x[None, :] + 1.0)  # (B, N)
        pw = tau[..., None] ** torch.arange(6, dtype=tau.dtype)  # (B, N, 6)
        vel = torch.einsum("bnk,bak->bna", pw, derivative_coefficients(c, 1))
        acc = torch.einsum("bnk,bak->bna", pw, derivative_coefficients(c, 2))
        ax, ay, az = acc[..., 0], acc[..., 1], acc[..., 2] + g
        f = m * torch.sqrt(ax * ax + ay * ay + az * az)
        power = 4.0 * params.k_p * (f / (4.0 * params.k_f)) ** 1.5
        tilt = torch.atan2(torch.sqrt(ax * ax + ay * ay + 1e-12), az)
        speed = torch.sqrt((vel * vel).sum(-1) + 1e-12)
        pen = _hinge2(f - f_hi) + _hinge2(f_lo - f) + _hinge2(tilt - cfg.tilt_max) + _hinge2(speed - cfg.speed_max)
        half = 0.5 * T
        energy = energy + half * (power * w).sum(-1)
        feas = feas + half * (pen * w).sum(-1)
    off2 = (batch.offset ** 2).sum(-1)
    off = torch.sqrt(off2 + 1e-18)
    margin = spec.ring_radius - off - cfg.drone_radius
    coll = off2 + _hinge2(cfg.clearance_required - margin)
    return energy, coll, feas


def batch_loss(batch: TrajectoryBatch, spec, params: QuadParams, cfg: PlannerConfig,
               weights: LossWeights = LossWeights()):
    """Per-scenario weighted loss, shape (B,)."""
    e, c, f = loss_terms(batch, spec, params, cfg)
    return weights.energy * e + weights.collision * c + weights.feasibility * f


def trajectory_loss(traj, spec, params: QuadParams = QuadParams(), weights: LossWeights = LossWeights(),
                    cfg: PlannerConfig = PlannerConfig()) -> float:
    """Scalar loss of one :class:`TrajectorySpec`."""
    return float(batch_loss(_as_batch(traj), spec, params, cfg, weights)[0])


def trajectory_energy(traj, spec, params: QuadParams = QuadParams(), cfg: PlannerConfig = PlannerConfig()) -> float:
    """Unweighted flatness energy (J) of one :class:`TrajectorySpec`."""
    return float(loss_terms(_as_batch(traj), spec, params, cfg)[0][0])


def _as_batch(traj) -> TrajectoryBatch:
    t = lambda a: torch.as_tensor(np.asarray(a, dtype=float))[None]
    return TrajectoryBatch(t(traj.coeffs), t(traj.durations), t(traj.crossing_point), t(traj.offset),
                           t([traj.crossing_s])[0], t([traj.crossing_s])[0],
                           t(traj.crossing_velocity / np.linalg.norm(traj.crossing_velocity)), t(traj.exit_point))
