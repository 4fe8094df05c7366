"""Run-directory lifecycle: resolved config, stats stream, checkpoints.

Layout of a run directory:

    config.json          resolved RunConfig (sorted keys)
    stats.jsonl          one IterationStats object per iteration
    timing.jsonl         wall-clock sidecar (kept out of stats.jsonl so the
                         stats stream is byte-reproducible)
    train_episodes.csv   per-episode log; every stats number can be
                         recomputed from it
    ckpt_XXXXXX.json     periodic checkpoints (iteration count in the name)
    final_params.json    checkpoint at the last completed iteration
    last_good.json       written only when a numeric abort interrupted
    error.json           training; holds the pre-failure state
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .charts import write_csv
from .config import RunConfig, save_config
from .networks import NetParams, params_from_dict, params_to_dict
from .rollout import CollectReport
from .tracks import build_track
from .trainer import (
    IterationStats,
    LagrangeState,
    NumericalError,
    init_networks,
    train_iteration,
)

OUT_ENV_VAR = "CRLLK_OUT"

EPISODE_CSV_HEADER = (
    "iter",
    "worker",
    "reset_seed",
    "steps",
    "sum_reward",
    "mean_cost_lane",
    "sum_cost_coll",
    "sum_cost_swt",
    "done_reason",
)


def resolve_out_root(cli_out: str | None, cfg: RunConfig) -> Path:
    """Output root priority: CRLLK_OUT env var, then --out, then config."""
    env = os.environ.get(OUT_ENV_VAR)
    if env:
        return Path(env)
    if cli_out:
        return Path(cli_out)
    return Path(cfg.out_dir)


def run_name_for(cfg: RunConfig) -> str:
    if cfg.run_name:
        return cfg.run_name
    track_tag = Path(cfg.track).stem
    return f"{cfg.mode}_{track_tag}_s{cfg.base_seed}"


def lagrange_to_dict(lag: LagrangeState) -> dict:
    return dataclasses.asdict(lag)


def lagrange_from_dict(data: dict) -> LagrangeState:
    return LagrangeState(**data)


def save_checkpoint(
    path: Path,
    iteration: int,
    cfg: RunConfig,
    policy: NetParams,
    value: NetParams,
    lagrange: LagrangeState,
) -> None:
    payload = {
        "version": 1,
        "iteration": iteration,
        "mode": cfg.mode,
        "track": cfg.track,
        "base_seed": cfg.base_seed,
        "policy": params_to_dict(policy),
        "value": params_to_dict(value),
        "lagrange": lagrange_to_dict(lagrange),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> dict:
    """Returns the checkpoint dict with 'policy'/'value' parsed to NetParams
    and 'lagrange' to a LagrangeState."""
    with open(path) as fh:
        data = json.load(fh)
    if data.get("version") != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {data.get('version')!r}")
    data["policy"] = params_from_dict(data["policy"])
    data["value"] = params_from_dict(data["value"])
    data["lagrange"] = lagrange_from_dict(data["lagrange"])
    return data


@dataclass(frozen=True)
class RunResult:
    run_dir: Path
    completed_iterations: int
    aborted: bool = False
    error: str = ""


def _episode_rows(iteration: int, report: CollectReport):
    for w, buf in enumerate(report.buffers):
        for ep in buf.episodes:
            yield (
                iteration,
                w,
                ep.reset_seed,
                ep.length,
                ep.rewards.sum(),
                ep.cost_lane.mean(),
                ep.cost_coll.sum(),
                ep.cost_swt.sum(),
                ep.done_reason,
            )


def run_training(
    cfg: RunConfig,
    out_root: str | Path,
    log: Callable[[str], None] | None = None,
    progress_every: int = 0,
) -> RunResult:
    """Train per cfg into out_root/<run name>; never raises NumericalError
    (aborts are reported in the RunResult and on disk)."""
    run_dir = Path(out_root) / run_name_for(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")

    track = build_track(cfg.track)
    mode = cfg.train_mode()
    lagrange = cfg.lagrange()
    policy, value = init_networks(mode, cfg.env, cfg.net, cfg.base_seed)
    workers = cfg.worker_spec()
    save_checkpoint(run_dir / "ckpt_000000.json", 0, cfg, policy, value, lagrange)

    episode_rows: list[tuple] = []
    aborted = False
    error = ""
    completed = 0
    with open(run_dir / "stats.jsonl", "w") as stats_fh, open(
        run_dir / "timing.jsonl", "w"
    ) as timing_fh:
        for i in range(cfg.iterations):
            t0 = time.perf_counter()
            try:
                policy2, value2, lagrange2, stats, report = train_iteration(
                    track, cfg.env, policy, value, lagrange, mode, cfg.ppo, workers, i
                )
            except NumericalError as exc:
                aborted = True
                error = str(exc)
                save_checkpoint(run_dir / "last_good.json", i, cfg, policy, value, lagrange)
                with open(run_dir / "error.json", "w") as fh:
                    json.dump({"iteration": i, "error": error}, fh, indent=2)
                    fh.write("\n")
                break
            policy, value, lagrange = policy2, value2, lagrange2
            completed = i + 1
            stats_fh.write(json.dumps(stats.to_json_dict()) + "\n")
            timing_fh.write(
                json.dumps(
                    {
                        "iter": i,
                        "wall_ms": (time.perf_counter() - t0) * 1e3,
                        "worker_wall_ms": list(report.wall_ms),
                    }
                )
                + "\n"
            )
            episode_rows.extend(_episode_rows(i, report))
            if completed % cfg.checkpoint_interval == 0:
                save_checkpoint(
                    run_dir / f"ckpt_{completed:06d}.json", completed, cfg, policy, value, lagrange
                )
            if log is not None and progress_every and (
                completed % progress_every == 0 or completed == cfg.iterations
            ):
                log(
                    f"iter {completed}/{cfg.iterations}  J_R={stats.j_r:.3f}  "
                    f"J_clane={stats.j_clane:.3f}  J_ccoll={stats.j_ccoll:.3f}  "
                    f"lambda1={stats.lambda1:.4f}"
                )
    write_csv(run_dir / "train_episodes.csv", EPISODE_CSV_HEADER, episode_rows)
    if not aborted:
        save_checkpoint(
            run_dir / f"ckpt_{completed:06d}.json", completed, cfg, policy, value, lagrange
        )
        save_checkpoint(run_dir / "final_params.json", completed, cfg, policy, value, lagrange)
    return RunResult(
        run_dir=run_dir, completed_iterations=completed, aborted=aborted, error=error
    )


def read_stats(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "stats.jsonl"
    if not path.exists():
        raise FileNotFoundError(f"no stats.jsonl in {run_dir}")
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
