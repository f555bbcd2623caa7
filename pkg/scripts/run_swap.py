"""Swap-task lambda sweep: planning effort, control effort and the aligned plan-update diagnostic.

Usage: python3 scripts/run_swap.py [--scenario swap_symmetric] [--lambda 0,2.5,5] [--seeds 1-50]
"""

from __future__ import annotations

import argparse

import numpy as np

from predmppi.cli import parse_lambdas, parse_seeds
from predmppi.metrics import aggregate, aligned_plan_update, episode_metrics
from predmppi.scenario import load_scenario
from predmppi.simulation import run_episode


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="swap_symmetric")
    ap.add_argument("--lambda", dest="lam", default=None)
    ap.add_argument("--seeds", default="1-10")
    args = ap.parse_args()
    sc = load_scenario(args.scenario)
    lams = sc.lambdas if args.lam is None else parse_lambdas(args.lam)
    seeds = parse_seeds(args.seeds)
    print(f"{'lambda':>7} {'PE':>7} {'aligned':>8} {'|a|':>6} {'|w|':>6} {'ticks':>6} {'col%':>5} {'dlk%':>5}")
    for lam in lams:
        metrics, aligned = [], []
        for seed in seeds:
            log = run_episode(sc, lam, seed)
            metrics.append(episode_metrics(log))
            for aid in log.agent_ids:
                plans = [rec.plans[aid] for rec in log.ticks if aid in rec.plans]
                if len(plans) >= 2:
                    aligned.append(aligned_plan_update(plans))
        s = aggregate(metrics)
        print(
            f"{lam:7g} {s.mean['planning_effort']:7.3f} {np.mean(aligned):8.3f} {s.mean['mean_abs_accel']:6.3f} "
            f"{s.mean['mean_abs_angular']:6.3f} {s.mean['ticks_to_done']:6.1f} {s.col_pct:5.1f} {s.dlk_pct:5.1f}"
        )


if __name__ == "__main__":
    main()
