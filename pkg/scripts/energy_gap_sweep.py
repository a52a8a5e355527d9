"""Paired ideal/realistic sweep over ring speeds and seeds, with optional ablations.

    python scripts/energy_gap_sweep.py --out sweep/ [--seeds 10] [--workers 4] [--ablations]

Ablations re-run the sweep with parts of the realistic pipeline switched off
to show where the energy gap comes from.
"""
import argparse
import json
import time
from dataclasses import replace

from evnav.harness.compare import sweep, write_sweep
from evnav.harness.config import LinkConfig, MocapConfig, MotorConfig, SimConfig

SPEEDS = (0.05, -0.05, 0.25, -0.25, 0.50, -0.50)


def ablations(base: SimConfig) -> dict:
    quiet_motor = replace(base.motor, thrust_noise_std=0.0)
    no_noise = replace(base, motor=quiet_motor, link=LinkConfig(base.link.latency_mean, 0.0, 0.0),
                       mocap=replace(base.mocap, noise_pos=0.0, noise_rot=0.0))
    return {
        "no_thrust_noise": replace(base, motor=quiet_motor),
        "no_noise": no_noise,
        "no_noise_no_drag": replace(no_noise, quad=replace(base.quad, linear_drag=0.0)),
        "thrust_noise_5pct": replace(base, motor=MotorConfig(0.05, base.motor.noise_correlation_time)),
    }


def run(name, cfg, speeds, seeds, workers, out):
    t0 = time.perf_counter()
    rows, summary = sweep(cfg, speeds, seeds, workers=workers)
    write_sweep(rows, summary, f"{out}/{name}")
    summary["seconds"] = round(time.perf_counter() - t0, 1)
    print(f"{name:18s} {json.dumps(summary, sort_keys=True)}", flush=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--ablations", action="store_true")
    args = ap.parse_args()
    base = SimConfig()
    seeds = range(args.seeds)
    run("default", base, SPEEDS, seeds, args.workers, args.out)
    if args.ablations:
        for name, cfg in ablations(base).items():
            run(name, cfg, SPEEDS, seeds, args.workers, args.out)


if __name__ == "__main__":
    main()
