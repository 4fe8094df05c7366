#!/usr/bin/env python3
"""Adaptive multipliers versus fixed weights, discrete and continuous.

Trains both arms with matched budgets and seeds on the small loop, then
evaluates each on 100 episodes x 2 seeds and prints whether the adaptive
scheme ended up with lower lane deviation and fewer collisions.
"""

import argparse
import json

from crllk.benchmarks import mode_comparison_study


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--settings", nargs="+", default=["discrete", "continuous"],
                    choices=["discrete", "continuous"])
    ap.add_argument("--iterations", type=int, default=None,
                    help="training budget per arm (default: per-setting protocol)")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    ap.add_argument("--out", default="runs/comparison")
    args = ap.parse_args()

    ok = True
    for setting in args.settings:
        res = mode_comparison_study(
            args.out, setting, seeds=tuple(args.seeds), iterations=args.iterations, log=print
        )
        print(json.dumps(res, indent=2))
        verdict = res["lane_improved"] and res["collision_improved"]
        ok = ok and verdict
        print(f"{setting}: adaptive beats fixed on both costs -> {verdict}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
