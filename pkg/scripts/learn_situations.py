#!/usr/bin/env python3
"""Learn MiniNav's situations over several seeds and show the silhouette of each k."""

import argparse

from planopt.situations import learn_situations, parse_ranges
from planopt.surrogate import MiniNav


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ranges", default="100:800:50")
    parser.add_argument("--samples", type=int, default=1000)
    parser.add_argument("--seeds", type=int, default=5)
    args = parser.parse_args()

    system = MiniNav()
    ranges = parse_ranges(args.ranges)
    for seed in range(args.seeds):
        model = learn_situations(system, ranges, samples_per_state=args.samples, seed=seed)
        scores = " ".join(f"k={k}:{v:.3f}" for k, v in sorted(model.candidate_scores.items()))
        print(f"seed {seed}: chose k={model.k}  [{scores}]")
        for s in model.situations:
            members = ", ".join(str(ranges[i]) for i in s.ranges)
            print(f"    situation {s.id} (representative {s.representative}): {members}")


if __name__ == "__main__":
    main()
