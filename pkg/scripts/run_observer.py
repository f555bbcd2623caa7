"""Observer task: how fast the observer's belief in the true goal B rises for each lambda.

Usage: python3 scripts/run_observer.py [--lambda 0,10,20,50] [--seeds 1-20] [--plot-dir DIR]
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from predmppi.cli import emit_plot_data, parse_lambdas, parse_seeds
from predmppi.scenario import load_scenario
from predmppi.simulation import run_episode


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda", dest="lam", default=None)
    ap.add_argument("--seeds", default="1-20")
    ap.add_argument("--plot-dir", type=Path, default=None, help="write plot files for the first seed of each lambda")
    args = ap.parse_args()
    sc = load_scenario("two_goal_observer")
    lams = sc.lambdas if args.lam is None else parse_lambdas(args.lam)
    seeds = parse_seeds(args.seeds)
    goal_b = sc.predictor.goals["B"]
    t_max = sc.termination.t_max
    print(f"{'lambda':>7} {'b_B>0.9 tick':>13} {'reached B':>10} {'min dist to A':>14}")
    for lam in lams:
        ticks, reached, closest_a = [], 0, []
        for i, seed in enumerate(seeds):
            log = run_episode(sc, lam, seed)
            crossing = next((r.tick for r in log.ticks if r.beliefs["robot"]["B"] > 0.9), t_max)
            ticks.append(crossing)
            traj = log.trajectory("robot")
            reached += float(np.linalg.norm(traj[-1] - goal_b)) <= sc.termination.goal_tolerance
            closest_a.append(float(np.min(np.linalg.norm(traj - sc.predictor.goals["A"], axis=1))))
            if args.plot_dir is not None and i == 0:
                emit_plot_data(log, args.plot_dir / f"lam{lam:g}")
        print(f"{lam:7g} {np.mean(ticks):13.1f} {reached:>5}/{len(seeds):<4} {np.mean(closest_a):14.2f}")


if __name__ == "__main__":
    main()
