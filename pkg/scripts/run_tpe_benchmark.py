#!/usr/bin/env python3
"""Paired TPE vs uniform-random benchmark on a 1-D quadratic objective.

Usage: python scripts/run_tpe_benchmark.py [--budget 60] [--runs 20]
"""
import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from absa_hybrid.hpo import Dimension, SearchSpace, tune


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--budget", type=int, default=60)
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--optimum", type=float, default=0.3)
    args = parser.parse_args()

    space = SearchSpace((Dimension("x", 0.0, 1.0),))

    def objective(point):
        return -(point["x"] - args.optimum) ** 2

    tpe_best, rnd_best, hits = [], [], 0
    for seed in range(args.runs):
        best_t, _ = tune(space, objective, budget=args.budget, seed=seed)
        best_r, _ = tune(space, objective, budget=args.budget, seed=seed,
                         sampler="random")
        tpe_best.append(best_t.value)
        rnd_best.append(best_r.value)
        if abs(best_t.point["x"] - args.optimum) <= 0.05:
            hits += 1
        print(f"seed {seed:>2}: tpe {best_t.value:+.3e} (x={best_t.point['x']:.4f})"
              f"   random {best_r.value:+.3e}")
    print(f"\nwithin 0.05 of optimum: {hits}/{args.runs}")
    print(f"median best: tpe {np.median(tpe_best):+.3e}  "
          f"random {np.median(rnd_best):+.3e}")


if __name__ == "__main__":
    main()
