"""Train the planner from scratch and write its parameter CSV.

    python scripts/train_planner.py --out params.csv [--epochs 200] [--seed 0]
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from evnav.planner import PlannerNet, Problem, TrainConfig, save_params, train
from evnav.planner.train import smoothed


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=TrainConfig().epochs)
    ap.add_argument("--seed", type=int, default=TrainConfig().seed)
    args = ap.parse_args()
    tc = replace(TrainConfig(), epochs=args.epochs, seed=args.seed)
    t0 = time.perf_counter()
    res = train(PlannerNet(seed=tc.seed), Problem(), tc,
                progress=lambda e, l: print(f"epoch {e:4d} loss {l:10.3f}") if e % 20 == 0 else None)
    save_params(res.net, args.out)
    sm = smoothed(res.history)
    print(f"held-out {res.initial_heldout:.3f} -> {res.final_heldout:.3f} "
          f"(ratio {res.final_heldout / res.initial_heldout:.3f}) in {time.perf_counter() - t0:.1f} s")
    print(f"smoothed history non-increasing: {bool(np.all(np.diff(sm) <= 0))}")


if __name__ == "__main__":
    main()
