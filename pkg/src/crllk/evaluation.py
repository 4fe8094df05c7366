"""Deterministic policy evaluation and metric aggregation.

Metrics mirror the training estimates: J_clane is the per-episode mean of
the per-step lane cost (decimeters), J_ccoll and J_cswt are per-episode
sums, J_R is the per-episode sum of raw progress rewards (meters). Each
evaluation seed gets its own episode set; the reported value is the mean of
the seed-level means, and the spread is the population std across those
seed means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import TrackMap
from .networks import NetParams, forward_policy, greedy_action, sample_and_logprob
from .rollout import eval_stream
from .simulator import DiscreteAction, EnvConfig, reset, step

METRICS = ("J_clane", "J_ccoll", "J_cswt", "J_R")

HIST_BINS = 21  # per-dimension bins over [-1, 1] for continuous actions


@dataclass(frozen=True)
class EpisodeRecord:
    seed_index: int
    episode: int
    reset_seed: int
    length: int
    j_clane: float
    j_ccoll: float
    j_cswt: float
    j_r: float
    done_reason: str

    def metric(self, name: str) -> float:
        return {
            "J_clane": self.j_clane,
            "J_ccoll": self.j_ccoll,
            "J_cswt": self.j_cswt,
            "J_R": self.j_r,
        }[name]


@dataclass(frozen=True)
class EvalSummary:
    episodes: tuple[EpisodeRecord, ...]
    per_seed: dict[str, tuple[float, ...]]
    mean: dict[str, float]
    std: dict[str, float]
    action_hist: dict
    stochastic: bool

    def formatted(self, name: str) -> str:
        return format_metric(self.mean[name], self.std[name])

    def turn_fraction(self) -> float:
        """Fraction of evaluation steps spent on the two turn actions."""
        if self.action_hist["kind"] != "discrete":
            raise ValueError("turn_fraction only applies to discrete policies")
        counts = self.action_hist["counts"]
        total = sum(counts)
        return (counts[0] + counts[1]) / total if total else 0.0

    def to_json_dict(self) -> dict:
        return {
            "stochastic": self.stochastic,
            "episodes": len(self.episodes),
            "metrics": {
                name: {
                    "mean": self.mean[name],
                    "std": self.std[name],
                    "per_seed": list(self.per_seed[name]),
                    "formatted": self.formatted(name),
                }
                for name in METRICS
            },
            "action_hist": self.action_hist,
        }


def format_metric(mean: float, std: float) -> str:
    return f"{mean:.2f}±{std:.2f}"


def _run_episode(
    track: TrackMap,
    policy: NetParams,
    env_cfg: EnvConfig,
    rng: np.random.Generator,
    stochastic: bool,
    seed_index: int,
    episode: int,
    actions_out: list,
) -> EpisodeRecord:
    reset_seed = int(rng.integers(2**63))
    state, obs = reset(track, reset_seed, env_cfg)
    rew = lane = coll = swt = 0.0
    steps = 0
    while True:
        dist = forward_policy(policy, obs)
        if stochastic:
            action, _ = sample_and_logprob(dist, rng)
        else:
            action = greedy_action(dist)
        if isinstance(action, DiscreteAction):
            actions_out.append(action.index)
        else:
            actions_out.append((action.steer, action.speed))
        state, out = step(track, state, action, env_cfg)
        rew += out.reward
        lane += out.cost_lane
        coll += out.cost_coll
        swt += out.cost_swt
        steps += 1
        obs = out.observation
        if out.done:
            break
    return EpisodeRecord(
        seed_index=seed_index,
        episode=episode,
        reset_seed=reset_seed,
        length=steps,
        j_clane=lane / steps,
        j_ccoll=coll,
        j_cswt=swt,
        j_r=rew,
        done_reason=state.done_reason,
    )


def _histogram(head: str, actions: list) -> dict:
    if head == "categorical":
        counts = [0, 0, 0]
        for a in actions:
            counts[a] += 1
        total = max(1, len(actions))
        return {
            "kind": "discrete",
            "counts": counts,
            "freqs": [c / total for c in counts],
        }
    arr = np.asarray(actions, dtype=float)
    edges = np.linspace(-1.0, 1.0, HIST_BINS + 1)
    steer, _ = np.histogram(np.clip(arr[:, 0], -1.0, 1.0), bins=edges)
    speed, _ = np.histogram(np.clip(arr[:, 1], -1.0, 1.0), bins=edges)
    return {
        "kind": "continuous",
        "edges": edges.tolist(),
        "steer": steer.tolist(),
        "speed": speed.tolist(),
    }


def evaluate_policy(
    track: TrackMap,
    policy: NetParams,
    env_cfg: EnvConfig,
    episodes: int,
    seeds: int,
    base_seed: int,
    stochastic: bool = False,
) -> EvalSummary:
    """Evaluate over `episodes` episodes per seed, `seeds` seeds.

    Greedy acting (the default) takes the mode/argmax of the policy head;
    stochastic acting samples it. Episode seeding is independent of the
    acting rule, so both variants start from identical states.
    """
    records: list[EpisodeRecord] = []
    actions: list = []
    for s in range(seeds):
        for e in range(episodes):
            rng = eval_stream(base_seed, s, e)
            records.append(
                _run_episode(track, policy, env_cfg, rng, stochastic, s, e, actions)
            )
    per_seed: dict[str, tuple[float, ...]] = {}
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for name in METRICS:
        by_seed = tuple(
            float(np.mean([r.metric(name) for r in records if r.seed_index == s]))
            for s in range(seeds)
        )
        per_seed[name] = by_seed
        mean[name] = float(np.mean(by_seed))
        std[name] = float(np.std(by_seed))
    return EvalSummary(
        episodes=tuple(records),
        per_seed=per_seed,
        mean=mean,
        std=std,
        action_hist=_histogram(policy.head, actions),
        stochastic=stochastic,
    )


def summary_table(summary: EvalSummary, title: str = "") -> str:
    """Plain-text metric table, one row per metric, mean±std cells."""
    lines = []
    if title:
        lines.append(title)
    width = max(len(n) for n in METRICS)
    for name in METRICS:
        lines.append(f"  {name:<{width}}  {summary.formatted(name)}")
    if summary.action_hist["kind"] == "discrete":
        f = summary.action_hist["freqs"]
        lines.append(
            f"  actions: turn_left {f[0]:.3f}  turn_right {f[1]:.3f}  go_straight {f[2]:.3f}"
        )
    return "\n".join(lines)
