"""Planner input featurization in the drone's yaw-aligned horizontal frame."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import rotations
from ..errors import NoPlanError


@dataclass(frozen=True)
class FeatureNorms:
    position: float = 2.0  # m
    rail_speed: float = 0.5  # m/s
    velocity: float = 1.0  # m/s


def _yaw_frame(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    # world -> yaw-aligned frame
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def raw_features(p, v, yaw: float, ring_position, ring_velocity_s: float) -> np.ndarray:
    """Unnormalized (relative position, rail speed, velocity) in the yaw frame."""
    r = _yaw_frame(yaw)
    rel = r @ (np.asarray(ring_position, dtype=float) - np.asarray(p, dtype=float))
    vel = r @ np.asarray(v, dtype=float)
    return np.concatenate([rel, [float(ring_velocity_s)], vel])


def _scales(norms: FeatureNorms) -> np.ndarray:
    return np.array([norms.position] * 3 + [norms.rail_speed] + [norms.velocity] * 3)


def normalize(raw, norms: FeatureNorms = FeatureNorms()) -> np.ndarray:
    return np.asarray(raw, dtype=float) / _scales(norms)


def denormalize(features, norms: FeatureNorms = FeatureNorms()) -> np.ndarray:
    return np.asarray(features, dtype=float) * _scales(norms)


def featurize(drone, ring, norms: FeatureNorms = FeatureNorms()) -> np.ndarray:
    """Normalized 7-vector for a drone state and a valid ring estimate."""
    if ring is None or not ring.valid:
        raise NoPlanError("ring estimate is not valid")
    yaw = rotations.yaw_of(drone.q)
    return normalize(raw_features(drone.p, drone.v, yaw, ring.position, ring.velocity_s), norms)
