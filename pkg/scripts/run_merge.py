"""Merge corridor: deadlock rates with the symmetric CV predictor and the convention-biased predictor.

Usage: python3 scripts/run_merge.py [--seeds 1-30] [--jobs 1]
"""

from __future__ import annotations

import argparse

from predmppi.cli import parse_seeds, run_batch
from predmppi.scenario import load_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="1-30")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    seeds = parse_seeds(args.seeds)
    print(f"{'scenario':>26} {'lambda':>6} {'dlk%':>6} {'col%':>6} {'dist':>7} {'ticks':>6}")
    for name in ("merge_corridor", "merge_corridor_convention"):
        sc = load_scenario(name)
        batch = run_batch(sc, sc.lambdas, seeds, jobs=args.jobs)
        for lam, s in sorted(batch.summaries.items()):
            print(
                f"{name:>26} {lam:6g} {s.dlk_pct:6.1f} {s.col_pct:6.1f} "
                f"{s.mean['distance_traveled']:7.2f} {s.mean['ticks_to_done']:6.1f}"
            )


if __name__ == "__main__":
    main()
