"""crllk command line: train, eval, compare, curves, tracks.

Exit codes: 0 success, 2 usage/config errors, 3 numeric failure during
training. The CRLLK_OUT environment variable overrides every other choice
of output root.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .charts import svg_bar_chart, svg_line_chart, write_csv
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .evaluation import METRICS, evaluate_policy, summary_table
from .runs import (
    RunResult,
    load_checkpoint,
    read_stats,
    resolve_out_root,
    run_training,
)
from .tracks import BUILTIN_TRACKS, TrackFileError, build_track, track_to_dict
from .trainer import NumericalError

EVAL_CSV_HEADER = (
    "seed_index",
    "episode",
    "reset_seed",
    "steps",
    "J_clane",
    "J_ccoll",
    "J_cswt",
    "J_R",
    "done_reason",
)


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    shortcuts = []
    for flag, key in (
        ("mode", "mode"),
        ("track", "track"),
        ("iterations", "iterations"),
        ("base_seed", "base_seed"),
    ):
        v = getattr(args, flag, None)
        if v is not None:
            shortcuts.append(f"{key}={v}")
    return apply_overrides(cfg, shortcuts + (args.set or []))


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out_root = resolve_out_root(args.out, cfg)
    print(
        f"training {cfg.mode} on {cfg.track}: {cfg.iterations} iterations, "
        f"base_seed={cfg.base_seed}, alpha1={cfg.alpha1} dm ({cfg.alpha1 / 10:.3f} m), "
        f"alpha2={cfg.alpha2}/episode"
    )
    result = run_training(
        cfg,
        out_root,
        log=print,
        progress_every=max(1, cfg.iterations // 10) if cfg.iterations else 0,
    )
    if result.aborted:
        print(
            f"numeric failure after {result.completed_iterations} iterations: "
            f"{result.error}\nlast good parameters kept in {result.run_dir}/last_good.json",
            file=sys.stderr,
        )
        return 3
    print(f"run complete: {result.run_dir}")
    return 0


def _eval_target(args) -> tuple[Path, Path]:
    """Resolve (config path, checkpoint path) from --run / --checkpoint."""
    if args.run:
        run_dir = Path(args.run)
        ckpt = Path(args.checkpoint) if args.checkpoint else run_dir / "final_params.json"
        return run_dir / "config.json", ckpt
    if not args.checkpoint or not args.config:
        raise ConfigError("eval needs either --run DIR or both --checkpoint and --config")
    return Path(args.config), Path(args.checkpoint)


def cmd_eval(args) -> int:
    config_path, ckpt_path = _eval_target(args)
    cfg = load_config(config_path)
    overrides = list(args.set or [])
    if args.episodes is not None:
        overrides.append(f"eval_episodes={args.episodes}")
    if args.seeds is not None:
        overrides.append(f"eval_seeds={args.seeds}")
    if args.stochastic:
        overrides.append("eval_stochastic=true")
    cfg = apply_overrides(cfg, overrides)

    ck = load_checkpoint(ckpt_path)
    mode = cfg.train_mode()
    if ck["policy"].head != mode.head:
        raise ConfigError(
            f"checkpoint has a {ck['policy'].head} policy head, which does not fit "
            f"mode {cfg.mode!r}"
        )
    track = build_track(cfg.track)
    summary = evaluate_policy(
        track,
        ck["policy"],
        cfg.env,
        episodes=cfg.eval_episodes,
        seeds=cfg.eval_seeds,
        base_seed=cfg.base_seed,
        stochastic=cfg.eval_stochastic,
    )
    out_dir = Path(args.out) if args.out else ckpt_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "track": cfg.track,
        "mode": cfg.mode,
        "checkpoint": str(ckpt_path),
        "checkpoint_iteration": ck["iteration"],
        "eval_episodes": cfg.eval_episodes,
        "eval_seeds": cfg.eval_seeds,
        **summary.to_json_dict(),
    }
    with open(out_dir / "eval.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    write_csv(
        out_dir / "eval_episodes.csv",
        EVAL_CSV_HEADER,
        (
            (r.seed_index, r.episode, r.reset_seed, r.length, r.j_clane, r.j_ccoll,
             r.j_cswt, r.j_r, r.done_reason)
            for r in summary.episodes
        ),
    )
    acting = "stochastic" if cfg.eval_stochastic else "greedy"
    print(summary_table(summary, title=f"{cfg.mode} on {cfg.track} ({acting})"))
    print(
        f"  J_clane is in decimeters ({summary.mean['J_clane'] / 10:.4f} m); "
        f"artifacts in {out_dir}"
    )
    return 0


_BEST_RULE = {"J_clane": min, "J_ccoll": min, "J_cswt": min, "J_R": max}


def cmd_compare(args) -> int:
    run_dirs = [Path(p) for p in args.runs]
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    names, tracks, evals = [], [], []
    for rd in run_dirs:
        cfg = load_config(rd / "config.json")
        eval_path = rd / "eval.json"
        if not eval_path.exists():
            raise ConfigError(f"{rd} has no eval.json; run `crllk eval --run {rd}` first")
        with open(eval_path) as fh:
            evals.append(json.load(fh))
        names.append(rd.name)
        tracks.append(cfg.track)
    if len(set(tracks)) != 1:
        raise ConfigError(f"refusing to compare runs across tracks: {sorted(set(tracks))}")

    means = {m: [e["metrics"][m]["mean"] for e in evals] for m in METRICS}
    # ties go to the earliest run in argument order
    best = {}
    for m in METRICS:
        pick = _BEST_RULE[m]
        target = pick(means[m])
        best[m] = names[means[m].index(target)]

    out_dir = Path(args.out) if args.out else run_dirs[0].parent
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(
        out_dir / "compare.csv",
        ["metric", *names, "best"],
        ([m, *means[m], best[m]] for m in METRICS),
    )
    with open(out_dir / "compare.json", "w") as fh:
        json.dump({"track": tracks[0], "runs": names, "means": means, "best": best}, fh, indent=2)
        fh.write("\n")

    col = max(12, max(len(n) for n in names) + 2)
    print(f"track: {tracks[0]}")
    print("  " + "metric".ljust(10) + "".join(n.rjust(col) for n in names) + "  best")
    for m in METRICS:
        cells = "".join(e["metrics"][m]["formatted"].rjust(col) for e in evals)
        print("  " + m.ljust(10) + cells + f"  {best[m]}")
    print(f"artifacts in {out_dir}")
    return 0


def _newest_checkpoint(run_dir: Path) -> Path:
    final = run_dir / "final_params.json"
    if final.exists():
        return final
    ckpts = sorted(run_dir.glob("ckpt_*.json"))
    if not ckpts:
        raise ConfigError(f"{run_dir} has no checkpoints")
    return ckpts[-1]


def _hist_artifacts(run_dir: Path, out_dir: Path, cfg: RunConfig) -> list[Path]:
    eval_path = run_dir / "eval.json"
    if eval_path.exists():
        with open(eval_path) as fh:
            hist = json.load(fh)["action_hist"]
    else:
        ck = load_checkpoint(_newest_checkpoint(run_dir))
        summary = evaluate_policy(
            build_track(cfg.track),
            ck["policy"],
            cfg.env,
            episodes=cfg.eval_episodes,
            seeds=cfg.eval_seeds,
            base_seed=cfg.base_seed,
            stochastic=cfg.eval_stochastic,
        )
        hist = summary.action_hist
    written = []
    if hist["kind"] == "discrete":
        labels = ["turn_left", "turn_right", "go_straight"]
        csv_path = out_dir / "action_hist.csv"
        write_csv(csv_path, ["action", "count", "freq"],
                  zip(labels, hist["counts"], hist["freqs"]))
        svg_path = out_dir / "action_hist.svg"
        svg_bar_chart(svg_path, labels, hist["freqs"], "action distribution")
        written += [csv_path, svg_path]
    else:
        centers = [
            (a + b) / 2 for a, b in zip(hist["edges"][:-1], hist["edges"][1:])
        ]
        for dim in ("steer", "speed"):
            csv_path = out_dir / f"action_hist_{dim}.csv"
            write_csv(csv_path, ["bin_center", "count"], zip(centers, hist[dim]))
            svg_path = out_dir / f"action_hist_{dim}.svg"
            svg_bar_chart(
                svg_path, [f"{c:.2f}" for c in centers], hist[dim], f"{dim} distribution"
            )
            written += [csv_path, svg_path]
    return written


def cmd_curves(args) -> int:
    run_dir = Path(args.run)
    stats_path = run_dir / "stats.jsonl"
    if not stats_path.exists():
        raise ConfigError(f"{run_dir} has no stats.jsonl")
    stats = read_stats(run_dir)
    if not stats:
        raise ConfigError(f"{stats_path} is empty; nothing to plot")
    cfg = load_config(run_dir / "config.json")
    out_dir = Path(args.out) if args.out else run_dir / "curves"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    xs = [s["iter"] for s in stats]
    for key, title in (
        ("lambda1", "lane multiplier"),
        ("J_clane", "average lane deviation (dm)"),
        ("J_R", "distance reward (m)"),
    ):
        ys = [s[key] for s in stats]
        csv_path = out_dir / f"{key}.csv"
        write_csv(csv_path, ["iter", key], zip(xs, ys))
        svg_path = out_dir / f"{key}.svg"
        svg_line_chart(svg_path, xs, ys, title, x_label="iteration", y_label=key)
        written += [csv_path, svg_path]
    written += _hist_artifacts(run_dir, out_dir, cfg)
    for p in written:
        print(p)
    return 0


def cmd_tracks(args) -> int:
    if args.tracks_cmd == "list":
        print(f"{'name':<14}{'length_m':>10}{'lane_m':>8}{'closed':>8}{'obstacles':>11}")
        for name, builder in BUILTIN_TRACKS.items():
            t = builder()
            print(
                f"{name:<14}{t.total_length:>10.3f}{t.lane_width:>8.2f}"
                f"{str(t.closed):>8}{len(t.obstacles):>11}"
            )
        return 0
    track = build_track(args.name)
    print(json.dumps(track_to_dict(track), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crllk",
        description="Constrained lane-keeping RL benchmark: train policies with "
        "adaptive constraint multipliers and compare them against fixed-weight "
        "baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy and persist the run")
    p.add_argument("--config", help="JSON config file (defaults apply otherwise)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key, e.g. --set ppo.gamma=0.9")
    p.add_argument("--mode", help="shortcut for --set mode=...")
    p.add_argument("--track", help="shortcut for --set track=...")
    p.add_argument("--iterations", type=int, help="shortcut for --set iterations=...")
    p.add_argument("--base-seed", dest="base_seed", type=int,
                   help="shortcut for --set base_seed=...")
    p.add_argument("--out", help="output root (CRLLK_OUT takes precedence)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--run", help="run directory (uses its config and final params)")
    p.add_argument("--checkpoint", help="explicit checkpoint path")
    p.add_argument("--config", help="config path (required with bare --checkpoint)")
    p.add_argument("--episodes", type=int, help="episodes per seed")
    p.add_argument("--seeds", type=int, help="number of evaluation seeds")
    p.add_argument("--stochastic", action="store_true", help="sample instead of greedy")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", help="artifact directory (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="side-by-side metric table for completed runs")
    p.add_argument("runs", nargs="+", help="two or more run directories with eval.json")
    p.add_argument("--out", help="artifact directory (default: first run's parent)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("curves", help="emit learning-curve CSV/SVG for a run")
    p.add_argument("run", help="run directory with stats.jsonl")
    p.add_argument("--out", help="artifact directory (default: RUN/curves)")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("tracks", help="inspect built-in tracks")
    tsub = p.add_subparsers(dest="tracks_cmd", required=True)
    tsub.add_parser("list", help="list built-in tracks")
    pshow = tsub.add_parser("show", help="print a track as JSON")
    pshow.add_argument("name", help="built-in name or track file path")
    p.set_defaults(func=cmd_tracks)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, TrackFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
