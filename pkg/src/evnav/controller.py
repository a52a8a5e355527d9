"""Cascaded PID flight control, rotor mixing and the mission state machine.

Outer loops (position -> velocity -> attitude/thrust) run off-board and reach
the vehicle through the command link; the attitude-rate loop and mixer run
on-board at a higher rate.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rotations
from .dynamics import DroneState, QuadParams


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    integral_clamp: float = math.inf
    output_clamp: float = math.inf


@dataclass(frozen=True)
class PidState:
    gains: PidGains
    integral: float = 0.0
    prev_error: float | None = None

    def reset(self) -> "PidState":
        return PidState(self.gains)


def pid_step(s: PidState, error: float, dt: float):
    """One PID update with conditional-integration anti-windup.

    The integral is frozen whenever the output would already be saturated in
    the direction of the error. The derivative acts on the error (first
    difference); the first call after a reset has no derivative kick.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = s.gains
    deriv = 0.0 if s.prev_error is None else (error - s.prev_error) / dt
    base = g.kp * error + g.kd * deriv
    u_frozen = base + g.ki * s.integral
    saturated = abs(u_frozen) >= g.output_clamp and u_frozen * error > 0
    integral = s.integral
    if not saturated:
        integral = min(max(integral + error * dt, -g.integral_clamp), g.integral_clamp)
    u = base + g.ki * integral
    u = min(max(u, -g.output_clamp), g.output_clamp)
    return u, PidState(g, integral, error)


@dataclass(frozen=True)
class AttitudeThrustCmd:
    roll: float
    pitch: float
    yaw_rate: float
    thrust: float


@dataclass(frozen=True)
class Setpoint:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class ControllerConfig:
    position: PidGains = PidGains(1.5, 0.05, 0.0, integral_clamp=1.0, output_clamp=1.5)
    velocity: PidGains = PidGains(3.0, 0.1, 0.05, integral_clamp=2.0, output_clamp=6.0)
    yaw: PidGains = PidGains(1.0, 0.0, 0.0, output_clamp=1.0)
    rate: PidGains = PidGains(0.1, 0.01, 0.002, integral_clamp=1.0, output_clamp=0.2)
    yaw_rate: PidGains = PidGains(0.1, 0.01, 0.0, integral_clamp=1.0, output_clamp=0.05)
    angle_gain: float = 15.0  # 1/s, attitude error -> body-rate setpoint
    tilt_max: float = math.radians(30.0)
    thrust_min_ratio: float = 0.3
    thrust_max_ratio: float = 1.8
    outer_rate: float = 100.0
    inner_rate: float = 500.0


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


class Cascade:
    """Off-board position/velocity loops producing attitude and thrust commands."""

    def __init__(self, params: QuadParams, cfg: ControllerConfig = ControllerConfig()):
        self.params = params
        self.cfg = cfg
        self.reset()

    def reset(self):
        """Flat-trim analogue: zero every integrator and derivative memory."""
        c = self.cfg
        self.pos = [PidState(c.position) for _ in range(3)]
        self.vel = [PidState(c.velocity) for _ in range(3)]
        self.yaw = PidState(c.yaw)

    def __call__(self, p, v, yaw: float, sp: Setpoint, dt: float) -> AttitudeThrustCmd:
        c, m, g = self.cfg, self.params.mass, self.params.g
        a_des = [0.0, 0.0, 0.0]
        for i in range(3):
            dv, self.pos[i] = pid_step(self.pos[i], float(sp.position[i] - p[i]), dt)
            v_ref = float(sp.velocity[i]) + dv
            da, self.vel[i] = pid_step(self.vel[i], v_ref - float(v[i]), dt)
            a_des[i] = float(sp.acceleration[i]) + da
        cy, sy = math.cos(yaw), math.sin(yaw)
        ax = cy * a_des[0] + sy * a_des[1]
        ay = -sy * a_des[0] + cy * a_des[1]
        pitch = min(max(ax / g, -c.tilt_max), c.tilt_max)
        roll = min(max(-ay / g, -c.tilt_max), c.tilt_max)
        thrust = m * (g + a_des[2])
        thrust = min(max(thrust, c.thrust_min_ratio * m * g), c.thrust_max_ratio * m * g)
        yaw_rate, self.yaw = pid_step(self.yaw, _wrap(0.0 - yaw), dt)
        return AttitudeThrustCmd(roll, pitch, yaw_rate, thrust)


def cascade(state: DroneState, sp: Setpoint, cfg: ControllerConfig = ControllerConfig(),
            params: QuadParams = QuadParams(), dt: float | None = None, loops: Cascade | None = None):
    """Stateless convenience wrapper around :class:`Cascade` for a single update."""
    loops = loops or Cascade(params, cfg)
    return loops(state.p, state.v, rotations.yaw_of(state.q), sp, dt or 1.0 / cfg.outer_rate)


class Mixer:
    """Inverse of the X-configuration mixer with saturation-aware redistribution."""

    def __init__(self, params: QuadParams):
        self.params = params
        self.m = params.mixer()
        self.minv = np.linalg.inv(self.m)

    def forward(self, rotor_speeds):
        return self.m @ np.square(np.asarray(rotor_speeds, dtype=float))

    def inverse(self, thrust: float, torques) -> np.ndarray:
        """Rotor speeds realising ``(thrust, torques)`` as closely as possible.

        When the exact solution needs a negative squared speed, yaw authority is
        given up first, then roll/pitch authority, keeping collective thrust.
        """
        mi = self.minv
        tx, ty, tz = (float(t) for t in torques)
        w2 = mi @ np.array([thrust, tx, ty, tz])
        if w2.min() < 0:
            base = mi @ np.array([thrust, tx, ty, 0.0])
            if base.min() >= 0:
                w2 = base + _max_scale(base, mi[:, 3] * tz) * mi[:, 3] * tz
            else:
                hover = mi @ np.array([thrust, 0.0, 0.0, 0.0])
                rp = mi @ np.array([0.0, tx, ty, 0.0])
                w2 = hover + _max_scale(hover, rp) * rp
            w2 = np.maximum(w2, 0.0)
        return np.minimum(np.sqrt(w2), self.params.omega_max)


def _max_scale(base, direction):
    """Largest a in [0, 1] with base + a*direction >= 0 elementwise."""
    a = 1.0
    for b, d in zip(base, direction):
        if d < 0 and b + d < 0:
            a = min(a, max(b, 0.0) / -d)
    return a


class AttitudeController:
    """On-board attitude loop: angle P -> body-rate PID -> torques -> mixer."""

    def __init__(self, params: QuadParams, cfg: ControllerConfig = ControllerConfig()):
        self.params = params
        self.cfg = cfg
        self.mixer = Mixer(params)
        self.reset()

    def reset(self):
        c = self.cfg
        self.rates = [PidState(c.rate), PidState(c.rate), PidState(c.yaw_rate)]

    def __call__(self, state: DroneState, cmd: AttitudeThrustCmd, dt: float) -> np.ndarray:
        roll, pitch, _ = rotations.roll_pitch_yaw(state.q)
        k = self.cfg.angle_gain
        rate_sp = (k * (cmd.roll - roll), k * (cmd.pitch - pitch), cmd.yaw_rate)
        torques = []
        for i in range(3):
            u, self.rates[i] = pid_step(self.rates[i], rate_sp[i] - float(state.omega_body[i]), dt)
            torques.append(u)
        return self.mixer.inverse(cmd.thrust, torques)


def attitude_mix(state: DroneState, cmd: AttitudeThrustCmd, cfg: ControllerConfig = ControllerConfig(),
                 params: QuadParams = QuadParams(), dt: float | None = None,
                 loop: AttitudeController | None = None) -> np.ndarray:
    loop = loop or AttitudeController(params, cfg)
    return loop(state, cmd, dt or 1.0 / cfg.inner_rate)


class Phase(enum.Enum):
    Idle = "Idle"
    Takeoff = "Takeoff"
    Stabilize = "Stabilize"
    Track = "Track"
    Traverse = "Traverse"
    Land = "Land"
    Abort = "Abort"


@dataclass(frozen=True)
class FlightPhase:
    phase: Phase = Phase.Idle
    entry_time: float = 0.0
    stable_since: float | None = None


@dataclass(frozen=True)
class SafetyEnvelope:
    lower: tuple = (-3.0, -2.0, 0.0)
    upper: tuple = (3.0, 2.0, 2.5)
    v_max: float = 2.0

    def __post_init__(self):
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)) or not self.v_max > 0:
            raise ValueError("empty safety envelope")

    def violated(self, p, v) -> bool:
        inside = all(lo <= float(x) <= hi for lo, x, hi in zip(self.lower, p, self.upper))
        return not inside or float(np.linalg.norm(v)) > self.v_max


@dataclass(frozen=True)
class MissionTargets:
    hover_point: np.ndarray
    armed: bool = True
    crossed: bool = False
    exit_point: np.ndarray | None = None
    altitude_tol: float = 0.05
    hold_tol: float = 0.05
    hold_time: float = 1.0
    exit_tol: float = 0.10


def advance_phase(fp: FlightPhase, state: DroneState, ring, envelope: SafetyEnvelope,
                  trigger_time: float, clock: float, mission: MissionTargets) -> FlightPhase:
    """Mission state machine; Abort dominates every other transition and is absorbing."""
    ph = fp.phase
    if ph is Phase.Abort:
        return fp
    if envelope.violated(state.p, state.v):
        return FlightPhase(Phase.Abort, clock)
    if ph is Phase.Idle:
        return FlightPhase(Phase.Takeoff, clock) if mission.armed else fp
    if ph is Phase.Takeoff:
        if abs(float(state.p[2]) - float(mission.hover_point[2])) <= mission.altitude_tol:
            return FlightPhase(Phase.Stabilize, clock)
        return fp
    if ph is Phase.Stabilize:
        err = float(np.linalg.norm(state.p - mission.hover_point))
        if err >= mission.hold_tol:
            return replace(fp, stable_since=None)
        since = clock if fp.stable_since is None else fp.stable_since
        if clock - since >= mission.hold_time - 1e-9:
            return FlightPhase(Phase.Track, clock)
        return replace(fp, stable_since=since)
    if ph is Phase.Track:
        if clock >= trigger_time and ring is not None and ring.valid:
            return FlightPhase(Phase.Traverse, clock)
        return fp
    if ph is Phase.Traverse:
        if mission.crossed and mission.exit_point is not None and \
                float(np.linalg.norm(state.p - mission.exit_point)) <= mission.exit_tol:
            return FlightPhase(Phase.Land, clock)
        return fp
    return fp


def step_response(cfg: ControllerConfig = ControllerConfig(), params: QuadParams = QuadParams(),
                  step_m: float = 1.0, axis: int = 0, duration: float = 6.0, dt: float = 1e-3):
    """Closed-loop response to a position step from hover, without link effects.

    Returns ``(t, x)``: sample times and the position along ``axis`` after each
    dynamics step.
    """
    from .dynamics import hover_speed, step
    start = np.array([0.0, 0.0, 1.5])
    target = start.copy()
    target[axis] += step_m
    s = DroneState(p=start, rotor_speeds=np.full(4, hover_speed(params)))
    loops, inner = Cascade(params, cfg), AttitudeController(params, cfg)
    sp = Setpoint(target)
    n_outer = int(round(1.0 / (cfg.outer_rate * dt)))
    n_inner = int(round(1.0 / (cfg.inner_rate * dt)))
    n = int(round(duration / dt))
    xs = np.empty(n)
    for k in range(n):
        if k % n_outer == 0:
            cmd = loops(s.p, s.v, rotations.yaw_of(s.q), sp, n_outer * dt)
        if k % n_inner == 0:
            rotors = inner(s, cmd, n_inner * dt)
        s = step(s, rotors, dt, params)
        xs[k] = s.p[axis]
    return dt * np.arange(1, n + 1), xs
