"""Run one paired ideal/realistic episode and print the comparison.

    python scripts/run_episode.py --seed 3 --speed 0.25 [--out logs/]
"""
import argparse
from dataclasses import replace

from evnav.harness import compare, run_episode, write_log
from evnav.harness.compare import cell_config
from evnav.harness.config import load_config
from evnav.harness.episode import load_planner


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--speed", type=float, help="constant signed ring speed (default: random profile)")
    ap.add_argument("--out")
    args = ap.parse_args()
    cfg = replace(load_config(args.config), seed=args.seed, mode="realistic")
    if args.speed is not None:
        cfg = cell_config(cfg, args.speed, args.seed)
    net = load_planner(cfg)
    real = run_episode(cfg, net)
    ideal = run_episode(replace(cfg, mode="ideal"), net)
    for name, log in (("ideal", ideal), ("realistic", real)):
        m = log.meta
        print(f"{name:9s} energy {m['energy_J']:8.3f} J  clearance {m['clearance_m']}  success {m['success']}  "
              f"phases {' > '.join(p for p, _ in m['phases'])}")
        if args.out:
            write_log(log, f"{args.out}/{name}")
    print(compare(ideal, real).to_json(), end="")


if __name__ == "__main__":
    main()
