#!/usr/bin/env python3
"""Lane-threshold sweep for the discrete adaptive mode.

A tighter alpha1 should produce a twitchier policy (more turn actions, less
lane deviation); a looser one should let the agent cover more distance.
"""

import argparse
import json

from crllk.benchmarks import threshold_study


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", type=float, nargs=2, default=[0.5, 0.75])
    ap.add_argument("--iterations", type=int, default=None,
                    help="training budget per arm (default: study protocol)")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    ap.add_argument("--out", default="runs/thresholds")
    args = ap.parse_args()

    res = threshold_study(
        args.out,
        alphas=tuple(args.alphas),
        seeds=tuple(args.seeds),
        iterations=args.iterations,
        log=print,
    )
    print(json.dumps(res, indent=2))
    ok = res["tight_turns_more"] and res["tight_deviates_less"] and res["loose_travels_farther"]
    print(f"all three directional effects present -> {ok}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
