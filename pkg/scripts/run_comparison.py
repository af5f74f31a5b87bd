#!/usr/bin/env python3
"""Train IL and DCIL over three seeds and compare closed-loop metrics.

Usage: python3 scripts/run_comparison.py [workdir] [--full]

Default is a quick desk-scale run; --full uses 200 episodes / 20 test
worlds matching the headline comparison.
"""

import argparse
import sys

from cil.experiment import directional_comparison, directional_criterion


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("workdir", nargs="?", default="runs/comparison")
    ap.add_argument("--full", action="store_true")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    kw = dict(episodes=200, test_worlds=20, epochs=2) if args.full \
        else dict(episodes=40, test_worlds=5, epochs=1)
    rows = directional_comparison(args.workdir, jobs=args.jobs, **kw)
    verdicts = directional_criterion(rows)
    for seed, ok in verdicts.items():
        print("seed %d: %s" % (seed, "pass" if ok else "fail"))
    n_pass = sum(verdicts.values())
    print("%d/%d seeds pass" % (n_pass, len(verdicts)))
    return 0 if n_pass >= 2 else 1


if __name__ == "__main__":
    sys.exit(main())
