"""Spikes and detection accuracy of the LIF layer as a function of ring speed.

    python scripts/perception_selectivity.py [--seeds 5]
"""
import argparse
import math

import numpy as np

from evnav.event_camera import CameraIntrinsics
from evnav.perception import LifParams, NeuronGrid, detect_windows, lif_process
from evnav.scenes import record_ring_sweep

SPEEDS = (0.005, 0.01, 0.02, 0.03, 0.05, 0.1, 0.25, 0.5)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--duration", type=float, default=1.0)
    args = ap.parse_args()
    intr, lif = CameraIntrinsics(), LifParams()
    n_win = int(round(args.duration * 100))
    print(f"{'speed':>7s} {'events':>8s} {'spikes':>8s} {'min/win':>8s} {'detections':>10s} {'ok %':>6s}")
    for speed in SPEEDS:
        ev, sp, mins, dets, ok = 0, 0, [], 0, 0
        for seed in range(args.seeds):
            sw = record_ring_sweep(speed, args.duration, seed)
            spikes = lif_process(NeuronGrid.for_camera(intr, lif), sw.events, lif)
            counts = np.bincount((spikes["t"] // 10_000).astype(int), minlength=n_win)[:n_win]
            ev += sw.events.size
            sp += spikes.size
            mins.append(counts[20:].min())
            for d in detect_windows(sw.events, intr):
                u, v, rho = sw.image_truth(d.t * 1e-6)
                dets += 1
                ok += math.hypot(d.center[0] - u, d.center[1] - v) <= 2 and abs(d.radius_px - rho) <= 0.1 * rho
        pct = 100 * ok / dets if dets else float("nan")
        print(f"{speed:7.3f} {ev:8d} {sp:8d} {min(mins):8d} {dets:10d} {pct:6.1f}")


if __name__ == "__main__":
    main()
