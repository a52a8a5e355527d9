"""Speed-selective spiking filter, ring detection and rail-constrained localisation.

A single layer of leaky integrate-and-fire cells sits on a stride-2 grid over
the sensor. Every event excites the cells whose receptive field covers it.
Slow edges produce events too sparsely for a cell to reach threshold before
its potential leaks away, so only fast-moving objects survive the filter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DegenerateGeometryError, StreamOrderError
from .event_camera import CameraIntrinsics, back_project
from .world import MocapSample, RingSpec

SPIKE_DTYPE = np.dtype([("t", np.int64), ("x", np.int32), ("y", np.int32)])
VELOCITY_CLAMP = 0.6


@dataclass(frozen=True)
class LifParams:
    v_threshold: float = 20.0
    tau_leak: float = 50.0  # ms
    synaptic_weight: float = 1.0
    pool_radius: int = 1
    v_reset: float = 0.0
    stride: int = 2

    def __post_init__(self):
        if not self.v_threshold > 0:
            raise ValueError("v_threshold must be positive")
        if not self.tau_leak > 0:
            raise ValueError("tau_leak must be positive")
        if not self.synaptic_weight > 0:
            raise ValueError("synaptic_weight must be positive")
        if self.pool_radius < 0 or self.stride < 1:
            raise ValueError("invalid pooling geometry")


@dataclass
class NeuronGrid:
    potential: np.ndarray
    last_update: np.ndarray
    clock: int = np.iinfo(np.int64).min // 4

    @classmethod
    def for_camera(cls, intrinsics: CameraIntrinsics, params: LifParams, v0: float | None = None):
        shape = (-(-intrinsics.height // params.stride), -(-intrinsics.width // params.stride))
        v = params.v_reset if v0 is None else v0
        return cls(np.full(shape, v, dtype=float), np.zeros(shape, dtype=np.int64))

    @property
    def shape(self):
        return self.potential.shape


@numba.njit(cache=True)
def _lif_kernel(potential, last_update, et, ex, ey, stride, radius, tau_us, w, vth, vreset,
                out_t, out_x, out_y):
    n_out = 0
    gh, gw = potential.shape
    for i in range(et.shape[0]):
        t = et[i]
        cx = ex[i] // stride
        cy = ey[i] // stride
        for yy in range(max(cy - radius, 0), min(cy + radius + 1, gh)):
            for xx in range(max(cx - radius, 0), min(cx + radius + 1, gw)):
                dt = t - last_update[yy, xx]
                v = potential[yy, xx]
                if dt > 0:
                    v = v * math.exp(-dt / tau_us)
                v += w
                last_update[yy, xx] = t
                if v >= vth:
                    v = vreset
                    if n_out < out_t.shape[0]:
                        out_t[n_out] = t
                        out_x[n_out] = xx
                        out_y[n_out] = yy
                    n_out += 1
                potential[yy, xx] = v
    return n_out


def lif_process(grid: NeuronGrid, events: np.ndarray, params: LifParams) -> np.ndarray:
    """Feed a time-ordered event batch through the grid; return emitted spikes."""
    if events.size == 0:
        return np.empty(0, SPIKE_DTYPE)
    et = np.ascontiguousarray(events["t"], dtype=np.int64)
    if et[0] < grid.clock or np.any(np.diff(et) < 0):
        raise StreamOrderError("events must be time-ordered and not precede the grid clock")
    r = params.pool_radius
    cap = et.size * (2 * r + 1) ** 2
    out_t = np.empty(cap, np.int64)
    out_x = np.empty(cap, np.int32)
    out_y = np.empty(cap, np.int32)
    n = _lif_kernel(grid.potential, grid.last_update, et,
                    np.ascontiguousarray(events["x"], dtype=np.int64),
                    np.ascontiguousarray(events["y"], dtype=np.int64),
                    params.stride, r, params.tau_leak * 1000.0, params.synaptic_weight,
                    params.v_threshold, params.v_reset, out_t, out_x, out_y)
    grid.clock = int(et[-1])
    spikes = np.empty(n, SPIKE_DTYPE)
    spikes["t"], spikes["x"], spikes["y"] = out_t[:n], out_x[:n], out_y[:n]
    return spikes


@dataclass(frozen=True)
class Detection:
    center: tuple  # (u, v) px
    radius_px: float
    t: int  # us
    spike_count: int


def spike_pixels(spikes: np.ndarray, stride: int) -> np.ndarray:
    """Grid-cell coordinates of spikes rescaled to pixel coordinates (cell centres)."""
    off = 0.5 * (stride - 1)
    return np.column_stack([spikes["x"] * stride + off, spikes["y"] * stride + off]).astype(float)


def _algebraic_circle(pts):
    a = np.column_stack([2.0 * pts, np.ones(len(pts))])
    b = (pts * pts).sum(axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    c = sol[:2]
    return c, math.sqrt(max(sol[2] + c @ c, 0.0))


def fit_ring(points: np.ndarray, n_iter: int = 4, min_band: float = 2.0):
    """Trimmed least-squares circle fit.

    Returns ``(center, radius, inlier_mask)``. Points whose radial residual
    exceeds ``max(min_band, 3 * robust sigma)`` are dropped and the fit is
    repeated; the radius is the mean inlier distance to the fitted centre.
    """
    pts = np.asarray(points, dtype=float)
    keep = np.ones(len(pts), dtype=bool)
    center = pts.mean(axis=0)
    for _ in range(n_iter):
        if keep.sum() < 3:
            break
        center, _ = _algebraic_circle(pts[keep])
        dist = np.hypot(*(pts - center).T)
        r = np.median(dist[keep])
        resid = np.abs(dist - r)
        mad = 1.4826 * np.median(resid[keep])
        new_keep = resid <= max(min_band, 3.0 * mad)
        if np.array_equal(new_keep, keep):
            break
        keep = new_keep
    dist = np.hypot(*(pts - center).T)
    return center, float(dist[keep].mean()) if keep.any() else 0.0, keep


def detect_cluster(spikes: np.ndarray, window: tuple, min_spikes: int = 10,
                   stride: int = 2) -> Detection | None:
    """Ring detection from the spikes of one aggregation window ``(t_start, t_end)`` us.

    The spike cloud of a horizontally moving ring is two opposing arcs whose
    populations fluctuate from window to window, so the centre comes from a
    trimmed circle fit rather than the raw centroid (identical for balanced,
    complete circles).
    """
    if spikes.size < max(min_spikes, 3):
        return None
    pts = spike_pixels(spikes, stride)
    center, radius, keep = fit_ring(pts)
    if keep.sum() < min_spikes or not radius > 0 or not np.all(np.isfinite(center)):
        return None
    t_mid = (int(window[0]) + int(window[1])) // 2
    return Detection((float(center[0]), float(center[1])), radius, t_mid, int(spikes.size))


@dataclass(frozen=True)
class RingEstimate:
    s: float
    position: np.ndarray
    velocity_s: float
    t: float
    valid: bool = False


def pixel_to_rail(det: Detection, camera_pose: MocapSample, intrinsics: CameraIntrinsics,
                  spec: RingSpec, now: float | None = None, staleness: float = 0.05,
                  min_sin: float = 0.05) -> RingEstimate:
    """Back-project a detection and intersect the ray with the rail line.

    The ring is known to hang on the rail, so the closest point of the rail
    line to the viewing ray resolves depth with a single camera.
    """
    if now is not None and now - camera_pose.timestamp > staleness:
        raise ValueError(f"camera pose is stale ({now - camera_pose.timestamp:.3f} s old)")
    origin, d = back_project(det.center[0], det.center[1], camera_pose.pose, intrinsics)
    e = spec.direction
    p0 = spec.rail_start
    b = float(d @ e)
    denom = 1.0 - b * b
    if denom < min_sin ** 2:
        raise DegenerateGeometryError("viewing ray nearly parallel to the rail")
    w = p0 - origin
    # minimise |p0 + s e - (origin + l d)| over (s, l)
    s = (b * float(w @ d) - float(w @ e)) / denom
    s = min(max(s, 0.0), spec.length)
    return RingEstimate(s, spec.point_at(s), 0.0, det.t * 1e-6, False)


def update_estimate(history: list, new: RingEstimate, alpha: float = 0.3,
                    clamp: float = VELOCITY_CLAMP) -> RingEstimate:
    """Append ``new`` to ``history`` with an exponentially smoothed rail velocity."""
    if not history:
        est = RingEstimate(new.s, new.position, 0.0, new.t, False)
        history.append(est)
        return est
    last = history[-1]
    dt = new.t - last.t
    if not dt > 0:
        raise StreamOrderError("ring estimates must have increasing timestamps")
    raw = (new.s - last.s) / dt
    prev_v = last.velocity_s if last.valid else raw
    v = alpha * raw + (1.0 - alpha) * prev_v
    v = min(max(v, -clamp), clamp)
    est = RingEstimate(new.s, new.position, v, new.t, True)
    history.append(est)
    return est


@dataclass(frozen=True)
class TrackerConfig:
    window_ms: float = 10.0
    min_spikes: int = 10
    estimate_period: float = 0.1  # s between velocity updates
    alpha: float = 0.3
    staleness: float = 0.05
    lag_compensation: float = 0.0  # s, added along the estimated velocity


class RingTracker:
    """Event stream -> spikes -> detections -> rail estimate, in stream order.

    Detections inside one ``estimate_period`` are averaged before the velocity
    update so the finite difference spans a useful baseline. The camera sits
    on a static tripod, so its mocap samples are averaged over the run.
    """

    def __init__(self, intrinsics: CameraIntrinsics, spec: RingSpec, lif: LifParams = LifParams(),
                 cfg: TrackerConfig = TrackerConfig()):
        self.intrinsics = intrinsics
        self.spec = spec
        self.lif = lif
        self.cfg = cfg
        self.grid = NeuronGrid.for_camera(intrinsics, lif)
        self.window_us = int(round(cfg.window_ms * 1000))
        self.window_start = 0
        self._spikes = []
        self._pending = []  # (t, s) positions awaiting the next estimate update
        self._period_start = None
        self.history = []
        self.detections = []
        self._cam_sum = None
        self._cam_n = 0
        self._cam_last = None
        self.last_window = None  # (start_us, end_us) of the newest window behind the estimate

    def add_camera_pose(self, sample: MocapSample):
        q = sample.pose.orientation
        if self._cam_sum is None:
            self._cam_sum = [np.zeros(3), np.zeros(4)]
        elif q @ (self._cam_sum[1] / max(self._cam_n, 1)) < 0:
            q = -q
        self._cam_sum[0] = self._cam_sum[0] + sample.pose.position
        self._cam_sum[1] = self._cam_sum[1] + q
        self._cam_n += 1
        self._cam_last = sample

    def camera_pose(self) -> MocapSample:
        from .world import Pose
        n = self._cam_n
        q = self._cam_sum[1] / n
        return MocapSample(Pose(self._cam_sum[0] / n, q / np.linalg.norm(q)),
                           self._cam_last.timestamp, self._cam_last.subject_id)

    @property
    def estimate(self) -> RingEstimate | None:
        return self.history[-1] if self.history else None

    def predict(self, t: float) -> RingEstimate | None:
        """Latest estimate extrapolated at constant rail velocity to time ``t``."""
        est = self.estimate
        if est is None:
            return None
        dt = t - est.t + self.cfg.lag_compensation
        s = est.s + (est.velocity_s * dt if est.valid else 0.0)
        s = min(max(s, 0.0), self.spec.length)
        return RingEstimate(s, self.spec.point_at(s), est.velocity_s, t, est.valid)

    def feed(self, events: np.ndarray, t_now_us: int):
        """Process events up to ``t_now_us``; closes every aggregation window that ended."""
        if events.size:
            self._spikes.append(lif_process(self.grid, events, self.lif))
        new = []
        while t_now_us >= self.window_start + self.window_us:
            w0, w1 = self.window_start, self.window_start + self.window_us
            sp = np.concatenate(self._spikes) if self._spikes else np.empty(0, SPIKE_DTYPE)
            inside = sp["t"] < w1
            det = detect_cluster(sp[inside], (w0, w1), self.cfg.min_spikes, self.lif.stride)
            self._spikes = [sp[~inside]] if (~inside).any() else []
            self.window_start = w1
            if det is None or self._cam_last is None:
                continue
            self.detections.append(det)
            new.append(det)
            try:
                pos = pixel_to_rail(det, self.camera_pose(), self.intrinsics, self.spec,
                                    now=w1 * 1e-6, staleness=self.cfg.staleness)
            except (DegenerateGeometryError, ValueError):
                continue
            self._absorb(pos, (w0, w1))
        return new

    def _absorb(self, pos: RingEstimate, window=None):
        if self._period_start is None:
            self._period_start = pos.t
        self._pending.append((pos.t, pos.s))
        if pos.t - self._period_start >= self.cfg.estimate_period - 1e-9:
            ts, ss = np.array(self._pending).T
            s = float(ss.mean())
            est = RingEstimate(s, self.spec.point_at(s), 0.0, float(ts.mean()), False)
            if not self.history or est.t > self.history[-1].t:
                update_estimate(self.history, est, self.cfg.alpha)
                self.last_window = window
            self._pending = []
            self._period_start = None


def detect_windows(events: np.ndarray, intrinsics: CameraIntrinsics, lif: LifParams = LifParams(),
                   window_us: int = 10_000, min_spikes: int = 10, t_start_us: int = 0) -> list:
    """Offline detection over consecutive fixed windows of a recorded stream."""
    grid = NeuronGrid.for_camera(intrinsics, lif)
    spikes = lif_process(grid, events, lif)
    if events.size == 0:
        return []
    out = []
    w0 = t_start_us + ((int(events["t"][0]) - t_start_us) // window_us) * window_us
    t_last = int(events["t"][-1])
    idx = 0
    while w0 <= t_last:
        w1 = w0 + window_us
        j = int(np.searchsorted(spikes["t"], w1, side="left"))
        det = detect_cluster(spikes[idx:j], (w0, w1), min_spikes, lif.stride)
        if det is not None:
            out.append(det)
        idx = j
        w0 = w1
    return out
