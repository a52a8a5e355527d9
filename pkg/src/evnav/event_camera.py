"""Pinhole DVS emulator.

Renders an analytic log-intensity image of the ring and converts pairs of
renders into polarity events with the usual reference-and-threshold pixel
model. Event timestamps are interpolated inside each render interval assuming
the log intensity changes linearly between renders.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rotations
from .errors import BehindCameraError, StreamOrderError
from .world import Pose, RingSpec

EVENT_DTYPE = np.dtype([("t", np.int64), ("x", np.int32), ("y", np.int32), ("p", np.int8)])
NEVER = np.iinfo(np.int64).min // 4


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 346
    height: int = 260
    fx: float = 300.0
    fy: float = 300.0
    cx: float = 173.0
    cy: float = 130.0
    contrast_threshold: float = 0.05
    refractory_period: int = 1000  # us
    sample_rate: float = 1000.0  # Hz
    l_bg: float = 0.0
    l_fg: float = 1.0
    edge_width: float = 1.5  # px
    noise_rate: float = 0.0  # Hz per pixel

    def __post_init__(self):
        if not self.contrast_threshold > 0:
            raise ValueError("contrast threshold must be positive")
        if self.refractory_period < 0:
            raise ValueError("refractory period must be non-negative")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point outside the sensor")
        if not self.l_fg > self.l_bg:
            raise ValueError("need l_fg > l_bg")

    @property
    def shape(self):
        return (self.height, self.width)


def default_camera_pose() -> Pose:
    """Tripod 4.5 m in front of the rail, optical axis along world +y."""
    # camera axes in world: x right = +x, y down = -z, z forward = +y
    r = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    return Pose(np.array([0.0, -4.5, 1.5]), rotations.from_matrix(r))


def to_camera_frame(point, camera_pose: Pose):
    return camera_pose.rotation.T @ (np.asarray(point, dtype=float) - camera_pose.position)


def project(point, camera_pose: Pose, intrinsics: CameraIntrinsics):
    """Sub-pixel ``(u, v)`` of a world point."""
    x, y, z = to_camera_frame(point, camera_pose)
    if not z > 0:
        raise BehindCameraError(f"point has non-positive depth {z:.3g}")
    return intrinsics.fx * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy


def back_project(u, v, camera_pose: Pose, intrinsics: CameraIntrinsics):
    """World-frame ray (origin, unit direction) through pixel ``(u, v)``."""
    d = np.array([(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0])
    d = camera_pose.rotation @ d
    return camera_pose.position.copy(), d / np.linalg.norm(d)


@dataclass
class SceneFrame:
    """Log-intensity image at time ``t`` (us).

    ``roi`` bounds every pixel that differs from the background as
    ``(y0, y1, x0, x1)``; ``None`` means the frame is uniform background.
    """

    log_intensity: np.ndarray
    t: int
    roi: tuple | None = None


@numba.njit(cache=True)
def _render_kernel(img, y0, y1, x0, x1, uc, vc, rho, e0, e1, l_bg, l_fg):
    span = l_fg - l_bg
    for y in range(y0, y1):
        dy = y - vc
        for x in range(x0, x1):
            dx = x - uc
            d = abs(math.sqrt(dx * dx + dy * dy) - rho)
            s = (d - e0) / (e1 - e0)
            s = min(max(s, 0.0), 1.0)
            img[y, x] = l_bg + span * (1.0 - s * s * (3.0 - 2.0 * s))


def ring_image_geometry(ring_center, spec: RingSpec, camera_pose: Pose, intrinsics: CameraIntrinsics):
    """Projected ``(u, v, radius_px, half_thickness_px)`` or None if behind the camera.

    The ring plane is taken parallel to the image plane; for the default rig
    this is exact and the projection is a circle.
    """
    x, y, z = to_camera_frame(ring_center, camera_pose)
    if not z > 0:
        return None
    f = intrinsics.fx
    return (f * x / z + intrinsics.cx, intrinsics.fy * y / z + intrinsics.cy,
            f * spec.ring_radius / z, f * 0.5 * spec.tube_thickness / z)


def render_log_intensity(ring_center, spec: RingSpec, camera_pose: Pose,
                         intrinsics: CameraIntrinsics, t: int, reuse: SceneFrame | None = None) -> SceneFrame:
    """Render the ring tube as a bright band on a dark background.

    Per pixel, ``d`` is the distance to the projected tube centre-line circle;
    intensity is foreground inside the tube and falls to background through a
    smoothstep of width ``edge_width``. ``ring_center=None`` renders an empty
    scene. ``reuse`` recycles the buffer of a frame that is no longer needed.
    """
    if reuse is None:
        img = np.full(intrinsics.shape, intrinsics.l_bg)
    else:
        img = reuse.log_intensity
        if reuse.roi is not None:
            a, b, c, d = reuse.roi
            img[a:b, c:d] = intrinsics.l_bg
    geom = None if ring_center is None else ring_image_geometry(ring_center, spec, camera_pose, intrinsics)
    if geom is None:
        return SceneFrame(img, int(t), None)
    uc, vc, rho, half = geom
    w = intrinsics.edge_width
    e0 = max(half - 0.5 * w, 0.0)
    e1 = e0 + w
    reach = rho + e1 + 1.0
    x0 = max(int(math.floor(uc - reach)), 0)
    x1 = min(int(math.ceil(uc + reach)) + 1, intrinsics.width)
    y0 = max(int(math.floor(vc - reach)), 0)
    y1 = min(int(math.ceil(vc + reach)) + 1, intrinsics.height)
    if x0 >= x1 or y0 >= y1:
        return SceneFrame(img, int(t), None)
    _render_kernel(img, y0, y1, x0, x1, uc, vc, rho, e0, e1, intrinsics.l_bg, intrinsics.l_fg)
    return SceneFrame(img, int(t), (y0, y1, x0, x1))


@dataclass
class PixelMemory:
    reference: np.ndarray
    last_event_t: np.ndarray

    @classmethod
    def from_frame(cls, frame: SceneFrame):
        return cls(frame.log_intensity.copy(), np.full(frame.log_intensity.shape, NEVER, dtype=np.int64))

    @classmethod
    def blank(cls, intrinsics: CameraIntrinsics):
        return cls(np.full(intrinsics.shape, intrinsics.l_bg),
                   np.full(intrinsics.shape, NEVER, dtype=np.int64))


def _union_roi(a, b):
    if a is None or b is None:
        return a if b is None else b
    return (min(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), max(a[3], b[3]))


@numba.njit(cache=True)
def _events_kernel(ref, last, lp, ln, y0, y1, x0, x1, C, t0, t1, refr, count_only,
                   out_t, out_x, out_y, out_p):
    n = 0
    span = t1 - t0
    for y in range(y0, y1):
        for x in range(x0, x1):
            r = ref[y, x]
            lnv = ln[y, x]
            dl = lnv - r
            k = int(math.floor(abs(dl) / C))
            if k == 0:
                continue
            if count_only:
                n += k
                continue
            pol = 1.0 if dl > 0 else -1.0
            lpv = lp[y, x]
            slope = lnv - lpv
            lt = last[y, x]
            for j in range(1, k + 1):
                level = r + pol * j * C
                frac = (level - lpv) / slope if slope != 0.0 else 1.0
                frac = min(max(frac, 0.0), 1.0)
                t = t0 + np.int64(np.rint(frac * span))
                if t - lt >= refr:
                    out_t[n] = t
                    out_x[n] = x
                    out_y[n] = y
                    out_p[n] = 1 if pol > 0 else -1
                    n += 1
                    lt = t
            last[y, x] = lt
            ref[y, x] = r + pol * k * C
    return n


def generate_events(prev: SceneFrame, nxt: SceneFrame, memory: PixelMemory,
                    intrinsics: CameraIntrinsics, full_frame: bool = False) -> np.ndarray:
    """Threshold-crossing events between two renders; updates ``memory`` in place.

    Each pixel emits ``floor(|L_next - L_ref| / C)`` events of the sign of the
    change. The j-th crossing is timestamped where the straight line from
    ``L_prev`` to ``L_next`` meets ``L_ref + j*C*polarity``. Crossings within the
    refractory period of the pixel's previous emitted event are dropped, but
    the reference still advances by the full ``k*C``. Output is ordered by
    ``(t, y, x)``.

    Only pixels inside the union of both frames' ROIs are visited; pass
    ``full_frame=True`` when the memory was seeded from something else.
    """
    t0, t1 = int(prev.t), int(nxt.t)
    if not t1 > t0:
        raise StreamOrderError(f"render times not increasing ({t0} -> {t1})")
    roi = (0, intrinsics.height, 0, intrinsics.width) if full_frame else _union_roi(prev.roi, nxt.roi)
    if roi is None:
        return np.empty(0, EVENT_DTYPE)
    y0, y1, x0, x1 = roi
    C = float(intrinsics.contrast_threshold)
    refr = int(intrinsics.refractory_period)
    lp, ln = prev.log_intensity, nxt.log_intensity
    dummy_i = np.empty(0, np.int64)
    dummy_s = np.empty(0, np.int8)
    cap = _events_kernel(memory.reference, memory.last_event_t, lp, ln, y0, y1, x0, x1, C, t0, t1,
                         refr, True, dummy_i, dummy_i, dummy_i, dummy_s)
    if cap == 0:
        return np.empty(0, EVENT_DTYPE)
    ot = np.empty(cap, np.int64)
    ox = np.empty(cap, np.int64)
    oy = np.empty(cap, np.int64)
    op = np.empty(cap, np.int8)
    n = _events_kernel(memory.reference, memory.last_event_t, lp, ln, y0, y1, x0, x1, C, t0, t1,
                       refr, False, ot, ox, oy, op)
    out = np.empty(n, EVENT_DTYPE)
    out["t"], out["x"], out["y"], out["p"] = ot[:n], ox[:n], oy[:n], op[:n]
    # kernel emits in (y, x, j) order, so a stable sort on t keeps the (y, x) tie-break
    return out[np.argsort(out["t"], kind="stable")]


def noise_events(rate_hz: float, t0: int, t1: int, intrinsics: CameraIntrinsics,
                 rng: np.random.Generator) -> np.ndarray:
    """Uniform background-activity events over ``[t0, t1)``."""
    n_pix = intrinsics.width * intrinsics.height
    n = rng.poisson(rate_hz * n_pix * (t1 - t0) * 1e-6) if rate_hz > 0 else 0
    out = np.empty(n, EVENT_DTYPE)
    if n:
        out["t"] = rng.integers(t0, t1, n)
        out["x"] = rng.integers(0, intrinsics.width, n)
        out["y"] = rng.integers(0, intrinsics.height, n)
        out["p"] = rng.choice(np.array([-1, 1], dtype=np.int8), n)
        out = out[np.lexsort((out["x"], out["y"], out["t"]))]
    return out


class EventCamera:
    """Stateful sensor: renders the ring each tick and emits the new events."""

    def __init__(self, intrinsics: CameraIntrinsics, pose: Pose, spec: RingSpec,
                 rng: np.random.Generator | None = None):
        self.intrinsics = intrinsics
        self.pose = pose
        self.spec = spec
        self.rng = rng
        self.memory = None
        self.frame = None

        self._spare = None
        self._last_center = None

    def render(self, ring_center, t_us: int, reuse=None) -> SceneFrame:
        return render_log_intensity(ring_center, self.spec, self.pose, self.intrinsics, t_us, reuse)

    def advance(self, ring_center, t_us: int) -> np.ndarray:
        """Render at ``t_us`` and return the events since the previous render."""
        if self.frame is None:
            self.frame = self.render(ring_center, t_us)
            self.memory = PixelMemory.from_frame(self.frame)
            self._last_center = None if ring_center is None else np.array(ring_center, dtype=float)
            return np.empty(0, EVENT_DTYPE)
        same = (ring_center is None and self._last_center is None) or (
            ring_center is not None and self._last_center is not None
            and np.array_equal(self._last_center, ring_center))
        if same and self.intrinsics.noise_rate == 0:
            # identical render: no pixel changes, only the timestamp advances
            self.frame.t = int(t_us)
            return np.empty(0, EVENT_DTYPE)
        self._last_center = None if ring_center is None else np.array(ring_center, dtype=float)
        frame = self.render(ring_center, t_us, reuse=self._spare)
        ev = generate_events(self.frame, frame, self.memory, self.intrinsics)
        if self.intrinsics.noise_rate > 0 and self.rng is not None:
            ev = np.concatenate([ev, noise_events(self.intrinsics.noise_rate, self.frame.t, frame.t,
                                                  self.intrinsics, self.rng)])
            ev = ev[np.lexsort((ev["x"], ev["y"], ev["t"]))]
        self._spare, self.frame = self.frame, frame
        return ev


def write_events_csv(path, events: np.ndarray):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_us", "x", "y", "p"])
        for e in events:
            w.writerow([int(e["t"]), int(e["x"]), int(e["y"]), int(e["p"])])


def read_events_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "t_us":
                continue
            t, x, y, p = (int(v) for v in row)
            if p not in (1, -1):
                raise ValueError(f"bad polarity {p}")
            rows.append((t, x, y, p))
    ev = np.array(rows, dtype=EVENT_DTYPE) if rows else np.empty(0, EVENT_DTYPE)
    if ev.size and np.any(np.diff(ev["t"]) < 0):
        raise StreamOrderError("event timestamps must be non-decreasing")
    return ev
