#!/usr/bin/env python3
"""Desk-scale optimizer comparison on MiniNav.

Runs every technique at 500, 700 and 800 cars, writes the study artifacts
and prints median final hypervolume per cell next to the hypervolume of the
surrogate's exact front.

    python3 scripts/run_desk_study.py --out results/desk --replicates 10
"""

import argparse
import logging
import time

from planopt.study import StudyPlan, oracle_hypervolume, run_study


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results/desk")
    parser.add_argument("--replicates", type=int, default=10)
    parser.add_argument("--budget", type=int, default=100)
    parser.add_argument("--samples", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--full-scale", action="store_true",
                        help="30 replicates and 5000 samples per evaluation")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)

    if args.full_scale:
        plan = StudyPlan.full_scale(budget=args.budget, seed=args.seed)
    else:
        plan = StudyPlan(replicates=args.replicates, budget=args.budget,
                         samples_per_eval=args.samples, seed=args.seed)
    t0 = time.perf_counter()
    report = run_study(plan, args.out, workers=args.workers)
    elapsed = time.perf_counter() - t0

    print(f"{'cars':>5} {'technique':>9} {'median HV':>10} {'/ exact':>8} {'min trip':>9}")
    for s in plan.situations:
        exact = oracle_hypervolume(s, report.refs[s])
        for t in plan.techniques:
            hv = report.median(s, t, "hypervolume")
            trip = report.median(s, t, "min_trip_overhead")
            print(f"{s:>5} {t:>9} {hv:>10.3f} {hv / exact:>8.3f} {trip:>9.4f}")
    print(f"{len(report.rows)} runs in {elapsed:.1f} s -> {args.out}")


if __name__ == "__main__":
    main()
