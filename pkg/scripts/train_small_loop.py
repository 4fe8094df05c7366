#!/usr/bin/env python3
"""Train one policy on the small loop and print its evaluation table.

Typical use:
    python scripts/train_small_loop.py --mode crllk_continuous --iterations 300
"""

import argparse
from pathlib import Path

from crllk.config import RunConfig, apply_overrides
from crllk.evaluation import evaluate_policy, summary_table
from crllk.runs import load_checkpoint, run_training
from crllk.tracks import build_track


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mode", default="crllk_continuous")
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    cfg = RunConfig(mode=args.mode, iterations=args.iterations, base_seed=args.seed)
    cfg = apply_overrides(cfg, args.set)
    result = run_training(cfg, Path(args.out), log=print, progress_every=20)
    if result.aborted:
        print(f"aborted: {result.error}")
        return 3
    ck = load_checkpoint(result.run_dir / "final_params.json")
    summary = evaluate_policy(
        build_track(cfg.track),
        ck["policy"],
        cfg.env,
        episodes=cfg.eval_episodes,
        seeds=cfg.eval_seeds,
        base_seed=cfg.base_seed,
        stochastic=cfg.eval_stochastic,
    )
    print(summary_table(summary, title=f"{cfg.mode} after {cfg.iterations} iterations"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
