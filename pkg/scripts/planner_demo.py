#!/usr/bin/env python3
"""Replay a traffic trace through the planner and print the transcript."""

import argparse
import json

from planopt.optimizers import OptimizerConfig
from planopt.planner import Mode1Params, PlannerSettings, run_modes
from planopt.surrogate import MiniNav


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trace", default="300,450,600,650,300,780,720,500")
    parser.add_argument("--technique", default="nsga2")
    parser.add_argument("--budget", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    trace = [int(v) for v in args.trace.split(",")]
    settings = PlannerSettings(optimizer=args.technique,
                               optimizer_config=OptimizerConfig(budget=args.budget, seed=args.seed),
                               seed=args.seed)
    transcript = run_modes(MiniNav(), Mode1Params(), trace, settings)
    for event in transcript.events:
        print(event["timestamp"], event["event_kind"], event["situation"],
              json.dumps(event["details"]))
    print(f"{transcript.count('optimization')} optimizations, "
          f"{transcript.count('cache_hit')} cache hits, "
          f"{len(transcript.state.kb.records)} knowledge base records")


if __name__ == "__main__":
    main()
