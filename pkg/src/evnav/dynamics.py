"""Quadrotor rigid-body model, X-configuration mixer and actuation energy.

Body frame is forward-left-up. Rotors, viewed from above::

        2 (+x,+y)   1 (+x,-y)
                \\   /
                 \\ /
                 / \\
                /   \\
        3 (-x,+y)   4 (-x,-y)

Rotors 1 and 3 produce positive yaw reaction torque, 2 and 4 negative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from numba import njit

from .errors import NumericalDivergenceError


@dataclass(frozen=True)
class QuadParams:
    mass: float = 0.5
    inertia: tuple = (2.4e-3, 2.4e-3, 3.9e-3)
    arm_length: float = 0.115
    k_f: float = 6.11e-6
    k_m: float = 1.5e-7
    k_p: float = 1.0e-7
    motor_tau: float = 0.030
    omega_max: float = 900.0
    linear_drag: float = 0.10
    g: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "inertia", tuple(float(i) for i in self.inertia))
        vals = [self.mass, *self.inertia, self.arm_length, self.k_f, self.k_m, self.k_p,
                self.motor_tau, self.omega_max, self.g]
        if min(vals) <= 0 or self.linear_drag < 0:
            raise ValueError("quadrotor coefficients must be positive")
        if self.mass >= 0.6:
            raise ValueError("mass must stay below the 0.6 kg takeoff limit")

    @property
    def lever(self) -> float:
        return self.arm_length / math.sqrt(2.0)

    def mixer(self) -> np.ndarray:
        """Matrix mapping squared rotor speeds to (thrust, tau_x, tau_y, tau_z)."""
        kf, km, l = self.k_f, self.k_m, self.lever
        return np.array([
            [kf, kf, kf, kf],
            [-l * kf, l * kf, l * kf, -l * kf],
            [-l * kf, -l * kf, l * kf, l * kf],
            [km, -km, km, -km],
        ])


@dataclass
class DroneState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    omega_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotor_speeds: np.ndarray = field(default_factory=lambda: np.zeros(4))
    t: float = 0.0

    def copy(self) -> "DroneState":
        return DroneState(self.p.copy(), self.v.copy(), self.q.copy(), self.omega_body.copy(),
                          self.rotor_speeds.copy(), self.t)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.q, self.omega_body, self.rotor_speeds])

    @classmethod
    def from_vector(cls, x, t):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), x[10:13].copy(), x[13:17].copy(), t)


def hover_speed(params: QuadParams) -> float:
    return math.sqrt(params.mass * params.g / (4.0 * params.k_f))


def wrench_from_rotors(rotor_speeds, params: QuadParams):
    """Total thrust (N) and body torques (N m) produced by the four rotors."""
    w2 = np.square(np.asarray(rotor_speeds, dtype=float))
    thrust, tx, ty, tz = params.mixer() @ w2
    return float(thrust), np.array([tx, ty, tz])


def rotor_power(rotor_speeds, params: QuadParams) -> float:
    """Aerodynamic shaft power, ``k_p * sum(omega^3)``."""
    w = np.asarray(rotor_speeds, dtype=float)
    return float(params.k_p * np.sum(w * w * w))


@dataclass(frozen=True)
class EnergyAccumulator:
    joules: float = 0.0
    last_t: float = 0.0
    last_power: float | None = None


def accumulate(acc: EnergyAccumulator, power: float, dt: float) -> EnergyAccumulator:
    """Trapezoidal energy integration between consecutive power samples."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    prev = power if acc.last_power is None else acc.last_power
    return EnergyAccumulator(acc.joules + 0.5 * (prev + power) * dt, acc.last_t + dt, power)


@njit(cache=True)
def _deriv(x, cmd, scale, c, out):
    m, ix, iy, iz, kf, km, l, tau_m, drag, g = c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8], c[9]
    vx, vy, vz = x[3], x[4], x[5]
    qw, qx, qy, qz = x[6], x[7], x[8], x[9]
    wx, wy, wz = x[10], x[11], x[12]
    r1, r2, r3, r4 = x[13], x[14], x[15], x[16]
    f1 = kf * scale[0] * r1 * r1
    f2 = kf * scale[1] * r2 * r2
    f3 = kf * scale[2] * r3 * r3
    f4 = kf * scale[3] * r4 * r4
    thrust = f1 + f2 + f3 + f4
    tx = l * (-f1 + f2 + f3 - f4)
    ty = l * (-f1 - f2 + f3 + f4)
    tz = km * (r1 * r1 - r2 * r2 + r3 * r3 - r4 * r4)
    # third column of R(q)
    bx = 2 * (qx * qz + qw * qy)
    by = 2 * (qy * qz - qw * qx)
    bz = 1 - 2 * (qx * qx + qy * qy)
    a = thrust / m
    out[0] = vx
    out[1] = vy
    out[2] = vz
    out[3] = a * bx - drag * vx / m
    out[4] = a * by - drag * vy / m
    out[5] = a * bz - g - drag * vz / m
    out[6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[8] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[9] = 0.5 * (qw * wz + qx * wy - qy * wx)
    out[10] = (tx - (iz - iy) * wy * wz) / ix
    out[11] = (ty - (ix - iz) * wz * wx) / iy
    out[12] = (tz - (iy - ix) * wx * wy) / iz
    for i in range(4):
        out[13 + i] = (cmd[i] - x[13 + i]) / tau_m


@njit(cache=True)
def _rk4(x, cmd, dt, scale, c, wmax):
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    _deriv(x, cmd, scale, c, k1)
    h = 0.5 * dt
    for i in range(n):
        tmp[i] = x[i] + h * k1[i]
    _deriv(tmp, cmd, scale, c, k2)
    for i in range(n):
        tmp[i] = x[i] + h * k2[i]
    _deriv(tmp, cmd, scale, c, k3)
    for i in range(n):
        tmp[i] = x[i] + dt * k3[i]
    _deriv(tmp, cmd, scale, c, k4)
    y = np.empty(n)
    s6 = dt / 6.0
    finite = True
    for i in range(n):
        y[i] = x[i] + s6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not np.isfinite(y[i]):
            finite = False
    if not finite:
        return y, False
    qn = np.sqrt(y[6] * y[6] + y[7] * y[7] + y[8] * y[8] + y[9] * y[9])
    if qn == 0.0:
        return y, False
    for i in range(6, 10):
        y[i] /= qn
    for i in range(13, 17):
        y[i] = min(max(y[i], 0.0), wmax)
    return y, True


def _consts(params: QuadParams):
    ix, iy, iz = params.inertia
    return np.array([params.mass, ix, iy, iz, params.k_f, params.k_m, params.lever, params.motor_tau,
                     params.linear_drag, params.g])


def rk4_vector(x, cmd, dt, params: QuadParams, scale=(1.0, 1.0, 1.0, 1.0), consts=None):
    """One RK4 step on the flat 17-element state vector; returns a new array."""
    c = _consts(params) if consts is None else consts
    y, ok = _rk4(np.asarray(x, dtype=float), np.asarray(cmd, dtype=float), float(dt),
                 np.asarray(scale, dtype=float), c, float(params.omega_max))
    if not ok:
        raise NumericalDivergenceError("non-finite drone state")
    return y


def step(state: DroneState, commanded_rotor_speeds, dt: float, params: QuadParams,
         thrust_scale=(1.0, 1.0, 1.0, 1.0), consts=None) -> DroneState:
    """Advance the rigid body by ``dt`` with RK4 under a held rotor command.

    ``thrust_scale`` multiplies each rotor's thrust coefficient and models
    motor non-idealities (unity for a perfect motor).
    """
    if not 0 < dt <= 0.005 + 1e-12:
        raise ValueError("dt must lie in (0, 5 ms]")
    wmax = params.omega_max
    cmd = np.clip(np.asarray(commanded_rotor_speeds, dtype=float), 0.0, wmax)
    y = rk4_vector(state.as_vector(), cmd, dt, params, thrust_scale, consts)
    return DroneState.from_vector(y, state.t + dt)
