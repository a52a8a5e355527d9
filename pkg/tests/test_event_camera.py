import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from evnav import rotations
from evnav.errors import BehindCameraError, StreamOrderError
from evnav.event_camera import (CameraIntrinsics, EventCamera, PixelMemory, SceneFrame, back_project,
                                default_camera_pose, generate_events, noise_events, project,
                                read_events_csv, render_log_intensity, ring_image_geometry,
                                write_events_csv)
from evnav.scenes import record_ring_sweep
from evnav.world import Pose, RingSpec
from oracles import blob_scene, brute_force_events

INTR = CameraIntrinsics()
POSE = default_camera_pose()
SPEC = RingSpec()
SMALL = CameraIntrinsics(width=16, height=16, cx=8.0, cy=8.0)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(contrast_threshold=0.0)
    with pytest.raises(ValueError):
        CameraIntrinsics(refractory_period=-1)
    with pytest.raises(ValueError):
        CameraIntrinsics(cx=400.0)


def test_optical_axis_projects_to_principal_point():
    for depth in (0.5, 4.5, 30.0):
        u, v = project(POSE.position + depth * np.array([0, 1, 0]), POSE, INTR)
        assert (u, v) == pytest.approx((INTR.cx, INTR.cy), abs=1e-9)


def test_pinhole_offset_100px():
    z = 4.5
    point = POSE.position + np.array([z / INTR.fx * 100.0, z, 0.0])
    u, v = project(point, POSE, INTR)
    assert u == pytest.approx(INTR.cx + 100.0, abs=1e-9)
    assert v == pytest.approx(INTR.cy, abs=1e-9)


def test_project_matches_hand_chain():
    rng = np.random.default_rng(0)
    for _ in range(5):
        rv = rng.normal(0, 0.3, 3)
        pos = rng.normal(0, 1, 3)
        pose = Pose(pos, rotations.from_rotvec(rv))
        r = Rotation.from_rotvec(rv).as_matrix()  # camera -> world
        pc = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(1, 5)])
        world = pos + r @ pc
        u, v = project(world, pose, INTR)
        x, y, z = r.T @ (world - pos)
        assert u == pytest.approx(INTR.fx * x / z + INTR.cx, abs=1e-9)
        assert v == pytest.approx(INTR.fy * y / z + INTR.cy, abs=1e-9)


def test_behind_camera_raises():
    with pytest.raises(BehindCameraError):
        project(POSE.position - np.array([0, 1.0, 0]), POSE, INTR)


def test_back_project_inverts_project():
    point = np.array([0.7, 0.0, 1.4])
    u, v = project(point, POSE, INTR)
    origin, d = back_project(u, v, POSE, INTR)
    along = (point - origin) @ d
    assert np.linalg.norm(origin + along * d - point) < 1e-12


def test_render_empty_scene_is_background():
    f = render_log_intensity(None, SPEC, POSE, INTR, 0)
    assert np.all(f.log_intensity == INTR.l_bg) and f.roi is None


def test_render_behind_camera_is_background():
    f = render_log_intensity(POSE.position - np.array([0, 2.0, 0]), SPEC, POSE, INTR, 0)
    assert np.all(f.log_intensity == INTR.l_bg)


def test_render_centreline_is_foreground():
    # place the ring so that the top of its centre-line circle falls on a pixel centre
    c = SPEC.point_at(2.0)
    u, v, rho, _ = ring_image_geometry(c, SPEC, POSE, INTR)
    depth = 4.5
    du, dv = round(u) - u, round(v - rho) - (v - rho)
    c = c + np.array([du * depth / INTR.fx, 0.0, -dv * depth / INTR.fy])
    u, v, rho, _ = ring_image_geometry(c, SPEC, POSE, INTR)
    f = render_log_intensity(c, SPEC, POSE, INTR, 0)
    assert f.log_intensity[int(round(v - rho)), int(round(u))] == pytest.approx(INTR.l_fg)
    assert f.log_intensity.min() >= INTR.l_bg and f.log_intensity.max() <= INTR.l_fg


def test_render_area_matches_projected_tube():
    c = SPEC.point_at(1.7)
    _, _, rho, half = ring_image_geometry(c, SPEC, POSE, INTR)
    f = render_log_intensity(c, SPEC, POSE, INTR, 0)
    mid = 0.5 * (INTR.l_bg + INTR.l_fg)
    frac = np.mean(f.log_intensity > mid)
    # the band is at least one edge width wide, so compare with the rendered annulus width
    width = max(2 * half, INTR.edge_width)
    expected = 2 * math.pi * rho * width / (INTR.width * INTR.height)
    assert abs(frac - expected) <= 0.2 * expected


def _frame(img, t):
    return SceneFrame(np.asarray(img, dtype=float), t, None)


def test_static_scene_no_events():
    img = np.random.default_rng(0).uniform(0, 1, (16, 16))
    mem = PixelMemory.from_frame(_frame(img, 0))
    ev = generate_events(_frame(img, 0), _frame(img, 1000), mem, SMALL, full_frame=True)
    assert ev.size == 0


def test_single_pixel_two_events():
    intr = CameraIntrinsics(width=16, height=16, cx=8.0, cy=8.0, refractory_period=0)
    C = intr.contrast_threshold
    a = np.zeros((16, 16))
    b = a.copy()
    b[3, 5] = 2.5 * C
    mem = PixelMemory.from_frame(_frame(a, 0))
    ev = generate_events(_frame(a, 0), _frame(b, 1000), mem, intr, full_frame=True)
    assert ev.size == 2
    assert list(ev["t"]) == [400, 800]
    assert set(ev["x"]) == {5} and set(ev["y"]) == {3} and set(ev["p"]) == {1}
    assert mem.reference[3, 5] == pytest.approx(2 * C)


def test_refractory_drops_crossing_but_advances_reference():
    C = SMALL.contrast_threshold
    a = np.zeros((16, 16))
    b = a.copy()
    b[3, 5] = 2.5 * C
    mem = PixelMemory.from_frame(_frame(a, 0))
    ev = generate_events(_frame(a, 0), _frame(b, 1000), mem, SMALL, full_frame=True)
    assert list(ev["t"]) == [400]
    assert mem.reference[3, 5] == pytest.approx(2 * C)


def test_render_times_must_increase():
    img = np.zeros((16, 16))
    mem = PixelMemory.from_frame(_frame(img, 0))
    with pytest.raises(StreamOrderError):
        generate_events(_frame(img, 10), _frame(img, 10), mem, SMALL)


def test_faster_ring_more_events():
    slow = record_ring_sweep(0.05, 1.0, s0=1.5)
    fast = record_ring_sweep(0.50, 1.0, s0=1.5)
    assert fast.events.size > slow.events.size > 0


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_matches_brute_force_oracle(seed):
    frames = blob_scene(seed, n_frames=301)
    refr = 1000 if seed % 2 == 0 else 0
    intr = CameraIntrinsics(width=16, height=16, cx=8.0, cy=8.0, refractory_period=refr)
    sf = [_frame(img.copy(), t) for t, img in frames]
    mem = PixelMemory.from_frame(sf[0])
    ev = np.concatenate([generate_events(a, b, mem, intr, full_frame=True) for a, b in zip(sf[:-1], sf[1:])])
    got = [(int(e["t"]), int(e["x"]), int(e["y"]), int(e["p"])) for e in ev]
    assert got == brute_force_events(frames, intr.contrast_threshold, refr)
    assert len(got) > 0


frames_strategy = st.lists(
    st.lists(st.floats(0, 1), min_size=16, max_size=16), min_size=2, max_size=6)


@settings(max_examples=60, deadline=None)
@given(values=frames_strategy, refr=st.sampled_from([0, 300, 1000]),
       C=st.sampled_from([0.05, 0.1, 0.2]))
def test_properties_on_random_4x4_frames(values, refr, C):
    intr = CameraIntrinsics(width=4, height=4, cx=2.0, cy=2.0, contrast_threshold=C, refractory_period=refr)
    frames = [(k * 1000, np.array(v).reshape(4, 4)) for k, v in enumerate(values)]
    sf = [_frame(img, t) for t, img in frames]
    mem = PixelMemory.from_frame(sf[0])
    ev = []
    for a, b in zip(sf[:-1], sf[1:]):
        before = mem.reference.copy()
        out = generate_events(a, b, mem, intr, full_frame=True)
        # polarity equals the sign of the change since the reference
        for e in out:
            assert e["p"] == np.sign(b.log_intensity[e["y"], e["x"]] - before[e["y"], e["x"]])
        assert np.all(np.diff(out["t"]) >= 0)
        ev.extend((int(e["t"]), int(e["x"]), int(e["y"]), int(e["p"])) for e in out)
    assert ev == brute_force_events(frames, C, refr)
    last = {}
    for t, x, y, _ in ev:
        if (x, y) in last:
            assert t - last[(x, y)] >= refr
        last[(x, y)] = t


def test_threshold_monotonicity_on_ring_scene():
    counts = [record_ring_sweep(0.25, 1.0, s0=1.5, intrinsics=CameraIntrinsics(contrast_threshold=C)).events.size
              for C in (0.1, 0.2, 0.4)]
    assert counts[0] >= counts[1] >= counts[2]


def test_event_camera_stream_is_ordered_and_in_bounds():
    sw = record_ring_sweep(-0.3, 0.5, seed=4)
    ev = sw.events
    assert np.all(np.diff(ev["t"]) >= 0)
    assert ev["x"].min() >= 0 and ev["x"].max() < INTR.width
    assert ev["y"].min() >= 0 and ev["y"].max() < INTR.height
    assert set(np.unique(ev["p"])) <= {-1, 1}


def test_noise_events_in_bounds_and_sorted():
    intr = CameraIntrinsics(noise_rate=1.0)
    ev = noise_events(1.0, 0, 100_000, intr, np.random.default_rng(0))
    assert ev.size > 0
    assert np.all(np.diff(ev["t"]) >= 0)
    assert ev["t"].min() >= 0 and ev["t"].max() < 100_000


def test_static_ring_no_events_after_first_render():
    cam = EventCamera(INTR, POSE, SPEC)
    c = SPEC.point_at(2.0)
    assert cam.advance(c, 0).size == 0
    assert cam.advance(c, 1000).size == 0


def test_events_csv_round_trip(tmp_path):
    ev = record_ring_sweep(0.2, 0.2, seed=1).events
    path = tmp_path / "ev.csv"
    write_events_csv(path, ev)
    back = read_events_csv(path)
    assert np.array_equal(back, ev)
