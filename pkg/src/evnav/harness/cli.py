"""Command-line entry points: simulate, train, record, detect, compare, sweep."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from ..errors import EvNavError


def _cmd_simulate(args):
    from .config import load_config
    from .episode import run_episode
    from .runlog import write_log
    cfg = load_config(args.config)
    cfg = replace(cfg, mode=args.mode, seed=args.seed if args.seed is not None else cfg.seed,
                  planner_params=args.params or cfg.planner_params)
    log = run_episode(cfg)
    write_log(log, args.out)
    m = log.meta
    print(f"{cfg.mode} seed={cfg.seed} energy={m['energy_J']:.3f} J success={m['success']} "
          f"final_phase={m['phases'][-1][0] if m['phases'] else 'none'} -> {args.out}")


def _cmd_train(args):
    from ..planner.net import PlannerNet, save_params
    from ..planner.train import Problem, train
    from .config import load_config
    cfg = load_config(args.config)
    tc = cfg.training if args.seed is None else replace(cfg.training, seed=args.seed)
    net = PlannerNet(seed=tc.seed, t_min=cfg.planner.t_min, r_margin=cfg.planner.r_margin)
    problem = Problem(cfg.ring, cfg.quad, cfg.planner, cfg.loss_weights)
    every = max(1, tc.epochs // 10)
    result = train(net, problem, tc, progress=lambda e, l: print(f"epoch {e:4d} loss {l:.4f}") if e % every == 0 else None)
    save_params(result.net, args.out)
    ratio = result.final_heldout / result.initial_heldout
    print(f"held-out loss {result.initial_heldout:.4f} -> {result.final_heldout:.4f} (ratio {ratio:.3f}) -> {args.out}")


def _cmd_record(args):
    from ..event_camera import write_events_csv
    from ..scenes import record_ring_sweep
    from .config import load_config
    cfg = load_config(args.config)
    sw = record_ring_sweep(args.speed, args.duration, args.seed, cfg.ring, cfg.camera, s0=args.s0)
    write_events_csv(args.out, sw.events)
    print(f"speed {sw.speed:+.3f} m/s from s0={sw.s0:.3f} m over {sw.duration:g} s -> "
          f"{len(sw.events)} events -> {args.out}")


def _cmd_detect(args):
    from ..event_camera import read_events_csv
    from ..perception import detect_windows
    from .config import load_config
    cfg = load_config(args.config)
    events = read_events_csv(args.events)
    dets = detect_windows(events, cfg.camera, cfg.lif, int(round(cfg.tracker.window_ms * 1000)),
                          cfg.tracker.min_spikes)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_us", "u", "v", "radius_px", "spikes"])
        for d in dets:
            w.writerow([d.t, repr(d.center[0]), repr(d.center[1]), repr(d.radius_px), d.spike_count])
    print(f"{len(events)} events -> {len(dets)} detections -> {args.out}")


def _cmd_compare(args):
    from .compare import compare
    from .runlog import read_log
    report = compare(read_log(args.ideal), read_log(args.realistic))
    Path(args.out).write_text(report.to_json())
    print(report.to_json(), end="")


def _cmd_sweep(args):
    from .compare import sweep, write_sweep
    from .config import load_config
    cfg = load_config(args.config)
    if args.params:
        cfg = replace(cfg, planner_params=args.params)

    def show(r):
        status = r.error or f"gap {r.gap_percent:6.2f}% success {r.success}"
        print(f"speed {r.speed:+.2f} seed {r.seed:3d}: {status}", flush=True)

    rows, summary = sweep(cfg, args.speeds, args.seeds, workers=args.workers, progress=show)
    write_sweep(rows, summary, args.out)
    print(json.dumps(summary, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evnav", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one episode and write its log directory")
    s.add_argument("--config")
    s.add_argument("--mode", choices=("ideal", "realistic"), required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--params", help="planner parameter CSV (default: packaged parameters)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("train", help="train the planner and write its parameter CSV")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("record", help="render a constant-speed ring sweep to an event CSV")
    s.add_argument("--config")
    s.add_argument("--speed", type=float, required=True, help="signed rail speed, m/s")
    s.add_argument("--duration", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--s0", type=float, help="start arc length (default: drawn from the seed)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_record)

    s = sub.add_parser("detect", help="run spiking detection over a recorded event CSV")
    s.add_argument("--config")
    s.add_argument("--events", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_detect)

    s = sub.add_parser("compare", help="compare an ideal and a realistic log directory")
    s.add_argument("--ideal", required=True)
    s.add_argument("--realistic", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_compare)

    s = sub.add_parser("sweep", help="paired ideal/realistic runs over ring speeds and seeds")
    s.add_argument("--config")
    s.add_argument("--speeds", type=float, nargs="+", required=True)
    s.add_argument("--seeds", type=int, nargs="+", required=True)
    s.add_argument("--params")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (EvNavError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
