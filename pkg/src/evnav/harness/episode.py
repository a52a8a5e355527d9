"""Fixed-step episode scheduler for the ideal and realistic runs.

Per dynamics tick the realistic run executes, in order: world, camera,
perception, planner, off-board control, link, on-board control, dynamics and
logging. The ideal run replays the nominal plan kinematically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .. import rotations
from ..controller import (AttitudeController, Cascade, FlightPhase, MissionTargets, Phase, Setpoint,
                          advance_phase)
from ..dynamics import DroneState, EnergyAccumulator, _consts, accumulate, rotor_power, step
from ..errors import InfeasiblePlanError, NumericalDivergenceError
from ..event_camera import EventCamera, default_camera_pose
from ..perception import RingTracker
from ..planner.features import normalize, raw_features
from ..planner.net import PlannerNet, forward_numpy, load_default, load_params
from ..planner.trajectory import TrajectorySpec, build_trajectory, sample_setpoint
from ..world import (MotionProfile, Pose, Subject, make_random_profile, ring_arc_state, sample_mocap)
from .config import SimConfig, config_hash, config_to_dict
from .link import LinkModel, link_send
from .runlog import RunLog

_STREAMS = ("trigger", "mocap", "link", "motor", "camera")


def _rngs(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(_STREAMS, children)}


def motion_profile(cfg: SimConfig) -> MotionProfile:
    """Ring motion for this config; its clock starts when the drone enters Track."""
    m, length = cfg.motion, cfg.ring.length
    if m.kind == "constant":
        if m.s0 is None:
            t_center = 0.5 * sum(cfg.mission.trigger_bounds) + 1.5
            s0 = min(max(0.5 * length - m.speed * t_center, 0.1), length - 0.1)
        else:
            s0 = m.s0
        return MotionProfile(((cfg.duration + 60.0, m.speed),), seed=cfg.seed, s0=s0)
    s0 = 0.5 * length if m.s0 is None else m.s0
    return make_random_profile(cfg.seed, m.n_segments, m.speed_bounds, m.duration_bounds, s0=s0)


def trigger_offset(cfg: SimConfig) -> float:
    lo, hi = cfg.mission.trigger_bounds
    return float(_rngs(cfg.seed)["trigger"].uniform(lo, hi))


def load_planner(cfg: SimConfig) -> PlannerNet:
    return load_params(cfg.planner_params) if cfg.planner_params else load_default()


def nominal_plan(cfg: SimConfig, net: PlannerNet, profile: MotionProfile, ring_time: float,
                 t0: float) -> TrajectorySpec:
    """Plan from a perfect hover at the standoff point using the true ring state."""
    spec = cfg.ring
    s, vs = ring_arc_state(spec, profile, ring_time)
    start = np.asarray(cfg.mission.hover_point, dtype=float)
    feats = normalize(raw_features(start, np.zeros(3), 0.0, spec.point_at(s), vs))
    T, off = forward_numpy(net, feats)
    return build_trajectory(start, np.zeros(3), s, vs, T, off, spec, cfg.planner, t0=t0)


class WindowEnergy:
    """Trapezoidal energy of a power signal restricted to ``[start, end]``."""

    def __init__(self):
        self.start = None
        self.end = None
        self.acc = EnergyAccumulator()
        self.prev = None

    def open(self, start: float, end: float):
        self.start, self.end = float(start), float(end)

    @property
    def closed(self) -> bool:
        return self.start is not None and self.prev is not None and self.prev[0] >= self.end

    def feed(self, t: float, power: float):
        if self.prev is not None and self.start is not None:
            t0, p0 = self.prev
            a, b = max(t0, self.start), min(t, self.end)
            if b > a:
                slope = (power - p0) / (t - t0)
                pa, pb = p0 + slope * (a - t0), p0 + slope * (b - t0)
                self.acc = accumulate(EnergyAccumulator(self.acc.joules, a, pa), pb, b - a)
        self.prev = (t, power)

    @property
    def joules(self) -> float:
        return self.acc.joules


class CrossingMonitor:
    """Detects the first crossing of the ring plane and its clearance."""

    def __init__(self, cfg: SimConfig):
        self.spec = cfg.ring
        self.prev = None
        self.crossed = False
        self.radius = None
        self.point = None
        self.time = None

    def update(self, t: float, p: np.ndarray, ring_center: np.ndarray, direction: np.ndarray):
        side = float((p - self.spec.rail_start) @ direction)
        if self.prev is not None and not self.crossed:
            t0, p0, c0, side0 = self.prev
            if side0 <= 0.0 < side:
                f = -side0 / (side - side0)
                x = p0 + f * (p - p0)
                c = c0 + f * (ring_center - c0)
                self.crossed = True
                self.point = x
                self.time = t0 + f * (t - t0)
                self.radius = float(np.linalg.norm(x - c))
        self.prev = (t, p.copy(), ring_center.copy(), side)

    @property
    def clearance(self):
        return None if self.radius is None else self.spec.ring_radius - self.radius


def _base_meta(cfg: SimConfig, profile: MotionProfile, trig: float) -> dict:
    return {
        "seed": cfg.seed,
        "mode": cfg.mode,
        "config_hash": config_hash(cfg),
        "config": config_to_dict(cfg),
        "ring_profile": [list(s) for s in profile.segments],
        "ring_s0": profile.s0,
        "trigger_offset": trig,
        "phases": [],
        "energy_J": 0.0,
        "energy_window": None,
        "crossed": False,
        "clearance_m": None,
        "crossing_point": None,
        "aborted": False,
        "success": False,
    }


def _finish_meta(meta, cfg, window, monitor, aborted):
    meta["energy_J"] = window.joules
    meta["energy_window"] = None if window.start is None else [window.start, window.end]
    meta["energy_window_complete"] = window.closed
    meta["crossed"] = monitor.crossed
    meta["clearance_m"] = monitor.clearance
    meta["crossing_point"] = None if monitor.point is None else [float(v) for v in monitor.point]
    meta["aborted"] = aborted
    meta["success"] = bool(monitor.crossed and not aborted
                           and monitor.radius < cfg.ring.ring_radius
                           and monitor.clearance >= cfg.mission.clearance_success - 1e-12)


def run_episode(cfg: SimConfig, net: PlannerNet | None = None, observer=None) -> RunLog:
    """Simulate one episode and return its log.

    ``observer(t, state)`` is an optional read-only hook called once per
    dynamics tick after logging.
    """
    net = net if net is not None else load_planner(cfg)
    if cfg.mode == "ideal":
        return _run_ideal(cfg, net, observer)
    return _run_realistic(cfg, net, observer)


def _flat_state(pos, vel, acc, params, t) -> DroneState:
    """Kinematic state whose attitude tilts body z onto the required thrust direction."""
    fx, fy, fz = float(acc[0]), float(acc[1]), float(acc[2]) + params.g
    n = math.sqrt(fx * fx + fy * fy + fz * fz)
    zx, zy, zz = fx / n, fy / n, fz / n
    # shortest rotation taking world z to body z
    q = np.array([1.0 + zz, -zy, zx, 0.0])
    q /= np.linalg.norm(q)
    w = math.sqrt(params.mass * n / (4.0 * params.k_f))
    return DroneState(np.array(pos, dtype=float), np.array(vel, dtype=float), q, np.zeros(3), np.full(4, w), t)


def _state_row(t, phase, s: DroneState, energy):
    return (t, phase.value, *(float(v) for v in s.p), *(float(v) for v in s.v), *(float(v) for v in s.q),
            *(float(v) for v in s.omega_body), *(float(v) for v in s.rotor_speeds), energy)


def _run_ideal(cfg: SimConfig, net: PlannerNet, observer) -> RunLog:
    spec, params = cfg.ring, cfg.quad
    profile = motion_profile(cfg)
    trig = trigger_offset(cfg)
    log = RunLog(_base_meta(cfg, profile, trig))
    meta = log.meta
    dt = 1.0 / cfg.rates.dynamics
    n_log = int(round(cfg.rates.dynamics / cfg.rates.log))
    n_ticks = int(math.floor(cfg.duration * cfg.rates.dynamics + 1e-9))
    hover = np.asarray(cfg.mission.hover_point, dtype=float)
    meta["track_entry"] = 0.0
    meta["trigger_time"] = trig
    window, monitor = WindowEnergy(), CrossingMonitor(cfg)
    plan, plan_error = None, None
    try:
        plan = nominal_plan(cfg, net, profile, trig, trig)
        window.open(plan.t0, plan.t_end)
        meta["nominal_duration"] = plan.duration
    except InfeasiblePlanError as exc:
        plan_error = str(exc)
    meta["plan_error"] = plan_error
    phase = Phase.Track
    meta["phases"].append([phase.value, 0.0])
    t_land = None
    state = _flat_state(hover, np.zeros(3), np.zeros(3), params, 0.0)
    if n_ticks > 0:
        window.feed(0.0, rotor_power(state.rotor_speeds, params))
    for k in range(n_ticks):
        t = (k + 1) * dt
        ring_s, ring_vs = ring_arc_state(spec, profile, t)
        center = spec.point_at(ring_s)
        if plan is not None and phase is Phase.Track and t >= plan.t0:
            phase = Phase.Traverse
            meta["phases"].append([phase.value, t])
            meta["traverse_time"] = plan.t0
            log.add("plans", (t, plan.t0, plan.durations[0], plan.durations[1], *plan.crossing_point,
                              *plan.offset, -1, -1))
        if phase is Phase.Traverse and t >= plan.t_end:
            phase = Phase.Land
            t_land = t
            meta["phases"].append([phase.value, t])
        if plan is not None and phase is not Phase.Track:
            pos, vel, acc, _ = sample_setpoint(plan, t)
        else:
            pos, vel, acc = hover, np.zeros(3), np.zeros(3)
        state = _flat_state(pos, vel, acc, params, t)
        window.feed(t, rotor_power(state.rotor_speeds, params))
        if plan is not None:
            monitor.update(t, state.p, center, plan.crossing_velocity / np.linalg.norm(plan.crossing_velocity))
        if (k + 1) % n_log == 0:
            log.add("states", _state_row(t, phase, state, window.joules))
            log.add("setpoints", (t, *map(float, pos), *map(float, vel), *map(float, acc)))
            log.add("ring", (t, ring_s, ring_vs, ring_s, ring_vs, 1))
        if observer is not None:
            observer(t, state)
        if t_land is not None and t - t_land >= cfg.mission.land_hold - 1e-9 and window.closed:
            break
    _finish_meta(meta, cfg, window, monitor, aborted=False)
    meta["end_time"] = log.series["states"][-1][0] if log.series["states"] else 0.0
    return log


class _MocapFilter:
    """Latest mocap pose plus an EMA-filtered finite-difference velocity."""

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.sample = None
        self.velocity = np.zeros(3)

    def update(self, sample):
        if self.sample is not None:
            dt = sample.timestamp - self.sample.timestamp
            if dt > 0:
                raw = (sample.pose.position - self.sample.pose.position) / dt
                self.velocity = self.velocity + self.alpha * (raw - self.velocity)
        self.sample = sample

    def state(self) -> DroneState:
        s = self.sample
        return DroneState(s.pose.position.copy(), self.velocity.copy(), s.pose.orientation.copy(),
                          np.zeros(3), np.zeros(4), s.timestamp)


@dataclass
class _PlanState:
    plan: TrajectorySpec
    last_replan: float
    direction: np.ndarray


def _run_realistic(cfg: SimConfig, net: PlannerNet, observer) -> RunLog:
    spec, params, mission = cfg.ring, cfg.quad, cfg.mission
    rates = cfg.rates
    rngs = _rngs(cfg.seed)
    profile = motion_profile(cfg)
    trig = trigger_offset(cfg)
    log = RunLog(_base_meta(cfg, profile, trig))
    meta = log.meta

    dt = 1.0 / rates.dynamics
    n_cam = int(round(rates.dynamics / rates.camera))
    n_outer = int(round(rates.dynamics / rates.outer))
    n_inner = int(round(rates.dynamics / rates.inner))
    n_log = int(round(rates.dynamics / rates.log))
    replan_period = 1.0 / rates.replan
    n_ticks = int(math.floor(cfg.duration * rates.dynamics + 1e-9))

    cam_pose = default_camera_pose()
    camera = EventCamera(cfg.camera, cam_pose, spec, rngs["camera"])
    tracker = RingTracker(cfg.camera, spec, cfg.lif, cfg.tracker)
    link = LinkModel.from_config(cfg.link, rngs["link"])
    cascade = Cascade(params, cfg.controller)
    attitude = AttitudeController(params, cfg.controller)
    mocap_rng = rngs["mocap"]
    motor_rng = rngs["motor"]
    consts = _consts(params)

    hover = np.asarray(mission.hover_point, dtype=float)
    state = DroneState(p=np.asarray(mission.start_point, dtype=float).copy())
    fp = FlightPhase(Phase.Idle, 0.0)
    meta["phases"].append([fp.phase.value, 0.0])
    targets = MissionTargets(hover_point=hover, armed=True)
    filt = _MocapFilter(cfg.mocap.velocity_alpha)
    mocap_queue = []  # (t_deliver, sample)
    cmd_queue = []  # (t_deliver, cmd)
    cmd = None
    rotor_cmd = np.zeros(4)
    window, monitor = WindowEnergy(), CrossingMonitor(cfg)
    plan_state = None
    t_track = None
    trigger_abs = math.inf
    abort_anchor = None
    land_time = None
    motor_noise = np.zeros(4)
    tau_n = cfg.motor.noise_correlation_time
    phi = math.exp(-dt / tau_n) if tau_n > 0 else 0.0
    sig = cfg.motor.thrust_noise_std
    mocap_rate = rates.mocap
    n_events = 0
    ground = mission.ground_height
    direction = spec.ring_normal.copy()
    if n_ticks > 0:
        window.feed(0.0, rotor_power(state.rotor_speeds, params))

    for k in range(n_ticks):
        t = k * dt
        t_us = int(round(t * 1e6))
        # world
        ring_time = 0.0 if t_track is None else t - t_track
        ring_s, ring_vs = ring_arc_state(spec, profile, ring_time)
        center = spec.point_at(ring_s)
        # camera
        if k % n_cam == 0:
            events = camera.advance(center, t_us)
            n_events += int(events.size)
        else:
            events = events[:0]
        # mocap epochs and deliveries
        if k == 0 or math.floor(k * mocap_rate / rates.dynamics) > math.floor((k - 1) * mocap_rate / rates.dynamics):
            t_del = t + cfg.mocap.latency
            true_pose = Pose(state.p, state.q)
            mocap_queue.append((t_del, sample_mocap(true_pose, cfg.mocap.noise_pos, cfg.mocap.noise_rot,
                                                    cfg.mocap.latency, mocap_rng, t_del, Subject.drone)))
            mocap_queue.append((t_del, sample_mocap(cam_pose, cfg.mocap.noise_pos, cfg.mocap.noise_rot,
                                                    cfg.mocap.latency, mocap_rng, t_del, Subject.dvs_camera)))
        while mocap_queue and mocap_queue[0][0] <= t + 1e-12:
            _, smp = mocap_queue.pop(0)
            if smp.subject_id is Subject.drone:
                filt.update(smp)
            else:
                tracker.add_camera_pose(smp)
        # perception
        for det in tracker.feed(events, t_us):
            log.add("detections", (det.t * 1e-6, det.center[0], det.center[1], det.radius_px, det.spike_count))
        # planner, mission logic and off-board control
        if k % n_outer == 0 and filt.sample is not None:
            est = filt.state()
            ring_est = None
            candidate = None
            if fp.phase is Phase.Track and t >= trigger_abs:
                ring_est = tracker.predict(t)
                if ring_est is not None and ring_est.valid:
                    try:
                        feats = normalize(raw_features(est.p, est.v, rotations.yaw_of(est.q), ring_est.position,
                                                       ring_est.velocity_s))
                        T, off = forward_numpy(net, feats)
                        candidate = build_trajectory(est.p, est.v, ring_est.s, ring_est.velocity_s, T, off, spec,
                                                     cfg.planner, t0=t)
                    except InfeasiblePlanError:
                        ring_est = None
            if plan_state is not None:
                crossed = float((est.p - spec.rail_start) @ plan_state.direction) > 0.0
                targets = replace(targets, crossed=crossed, exit_point=plan_state.plan.exit_point)
            prev_phase = fp.phase
            fp = advance_phase(fp, est, ring_est, cfg.envelope, trigger_abs, t, targets)
            if fp.phase is not prev_phase:
                meta["phases"].append([fp.phase.value, t])
                if fp.phase is Phase.Takeoff:
                    cascade.reset()
                    attitude.reset()
                elif fp.phase is Phase.Track:
                    t_track = t
                    trigger_abs = t + trig
                    meta["track_entry"] = t
                    meta["trigger_time"] = trigger_abs
                elif fp.phase is Phase.Traverse:
                    d = candidate.crossing_velocity / np.linalg.norm(candidate.crossing_velocity)
                    plan_state = _PlanState(candidate, t, d)
                    direction = d
                    meta["traverse_time"] = t
                    try:
                        nominal = nominal_plan(cfg, net, profile, trig, t)
                        window.open(t, t + nominal.duration)
                        meta["nominal_duration"] = nominal.duration
                    except InfeasiblePlanError:
                        window.open(t, candidate.t_end)
                        meta["nominal_duration"] = None
                    _log_plan(log, t, candidate, tracker)
                elif fp.phase is Phase.Land:
                    # descend only once the plan and the energy window are over
                    land_time = max(t, plan_state.plan.t_end, window.end)
                elif fp.phase is Phase.Abort:
                    abort_anchor = (t, est.p.copy())
            elif fp.phase is Phase.Traverse:
                ps = plan_state
                if t - ps.last_replan >= replan_period - 1e-9 and ps.plan.t_cross - t > mission.replan_cutoff:
                    ps.last_replan = t
                    ring_est = tracker.predict(t)
                    if ring_est is not None and ring_est.valid:
                        p_ref, v_ref, a_ref, _ = sample_setpoint(ps.plan, t)
                        try:
                            new = build_trajectory(p_ref, v_ref, ring_est.s, ring_est.velocity_s,
                                                   ps.plan.t_cross - t, ps.plan.offset, spec, cfg.planner,
                                                   t0=t, start_a=a_ref)
                            ps.plan = new
                            _log_plan(log, t, new, tracker)
                        except InfeasiblePlanError:
                            pass
            sp = _setpoint(fp, t, hover, plan_state, abort_anchor, land_time, mission)
            if sp is not None:
                c = cascade(est.p, est.v, rotations.yaw_of(est.q), sp, 1.0 / rates.outer)
                log.add("setpoints", (t, *map(float, sp.position), *map(float, sp.velocity),
                                      *map(float, sp.acceleration)))
                sent = link_send(link, c, t)
                log.add("commands", (t, -1.0 if sent is None else sent[1], c.roll, c.pitch, c.yaw_rate, c.thrust))
                if sent is not None:
                    cmd_queue.append((sent[1], sent[0]))
        # link delivery and on-board control
        if k % n_inner == 0:
            while cmd_queue and cmd_queue[0][0] <= t + 1e-12:
                cmd = cmd_queue.pop(0)[1]
            if fp.phase is Phase.Idle or cmd is None:
                rotor_cmd = np.zeros(4)
            else:
                rotor_cmd = attitude(state, cmd, 1.0 / rates.inner)
        # dynamics with motor non-idealities
        if sig > 0:
            noise = motor_rng.normal(0.0, 1.0, 4)
            motor_noise = phi * motor_noise + sig * math.sqrt(1.0 - phi * phi) * noise
        try:
            state = step(state, rotor_cmd, dt, params, 1.0 + motor_noise, consts)
        except NumericalDivergenceError as exc:
            _finish_meta(meta, cfg, window, monitor, aborted=fp.phase is Phase.Abort)
            raise NumericalDivergenceError(str(exc), partial=log) from exc
        if state.p[2] < ground:
            # resting on the landing gear
            state.p[2] = ground
            if state.v[2] < 0.0:
                state.v[:] = 0.0
        t1 = (k + 1) * dt
        state.t = t1
        window.feed(t1, rotor_power(state.rotor_speeds, params))
        if fp.phase in (Phase.Traverse, Phase.Land):
            c1 = spec.point_at(ring_arc_state(spec, profile, t1 - t_track)[0])
            monitor.update(t1, state.p, c1, direction)
        # logging
        if (k + 1) % n_log == 0:
            log.add("states", _state_row(t1, fp.phase, state, window.joules))
            est_r = tracker.estimate
            ring_t = 0.0 if t_track is None else t1 - t_track
            s1, vs1 = ring_arc_state(spec, profile, ring_t)
            log.add("ring", (t1, s1, vs1, -1.0 if est_r is None else est_r.s,
                             0.0 if est_r is None else est_r.velocity_s, int(bool(est_r and est_r.valid))))
        if observer is not None:
            observer(t1, state)
        if land_time is not None and t1 - land_time >= mission.land_hold - 1e-9 and window.closed:
            break
        if fp.phase is Phase.Abort and state.p[2] <= ground and t1 - abort_anchor[0] > 0.1:
            break

    _finish_meta(meta, cfg, window, monitor, aborted=fp.phase is Phase.Abort)
    meta["n_events"] = n_events
    meta["n_detections"] = len(tracker.detections)
    meta["end_time"] = log.series["states"][-1][0] if log.series["states"] else 0.0
    return log


def _log_plan(log, t, plan, tracker):
    w = tracker.last_window or (-1, -1)
    log.add("plans", (t, plan.t0, plan.durations[0], plan.durations[1], *map(float, plan.crossing_point),
                      *map(float, plan.offset), w[0] * 1e-6 if w[0] >= 0 else -1.0, w[1] * 1e-6 if w[1] >= 0 else -1.0))


def _setpoint(fp, t, hover, plan_state, abort_anchor, land_time, mission):
    ph = fp.phase
    if ph is Phase.Idle:
        return None
    if ph in (Phase.Takeoff, Phase.Stabilize, Phase.Track):
        return Setpoint(hover)
    if ph is Phase.Traverse:
        p, v, a, _ = sample_setpoint(plan_state.plan, t)
        return Setpoint(p, v, a)
    if ph is Phase.Land:
        plan = plan_state.plan
        if t < plan.t_end:
            p, v, a, _ = sample_setpoint(plan, t)
            return Setpoint(p, v, a)
        e = plan.exit_point
        z = max(mission.ground_height, e[2] - mission.abort_descent_rate * max(0.0, t - land_time))
        return Setpoint(np.array([e[0], e[1], z]))
    t0, p0 = abort_anchor
    z = max(mission.ground_height, p0[2] - mission.abort_descent_rate * (t - t0))
    return Setpoint(np.array([p0[0], p0[1], z]))
