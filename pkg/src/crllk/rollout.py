"""Parallel episode collection.

Workers gather full episodes against an immutable policy/critic snapshot and
the learner merges their buffers in worker-index order, so results never
depend on thread scheduling. Every random draw in a run comes from a
numpy SeedSequence spawned from (base_seed, domain, ...) where the domain
tag keeps the consumers from ever sharing a stream:

    1 = rollout      (base_seed, 1, worker_index, iteration)
    2 = update       (base_seed, 2, iteration)
    3 = evaluation   (base_seed, 3, seed_index, episode)
    4 = net init     (base_seed, 4, net_index)

SeedSequence hashing is injective over these tuples for practical purposes,
which is what makes 4-worker collection bitwise-equal to a sequential
emulation of the same four streams.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .networks import NetParams, forward_policy, forward_value, sample_and_logprob
from .simulator import ContinuousAction, DiscreteAction, EnvConfig, reset, step
from .geometry import TrackMap

DOMAIN_ROLLOUT = 1
DOMAIN_UPDATE = 2
DOMAIN_EVAL = 3
DOMAIN_INIT = 4


def seed_stream(base_seed: int, worker_index: int, iteration: int) -> np.random.Generator:
    """The rollout stream for one (worker, iteration) cell."""
    return np.random.default_rng(
        np.random.SeedSequence([base_seed, DOMAIN_ROLLOUT, worker_index, iteration])
    )


def update_stream(base_seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, DOMAIN_UPDATE, iteration]))


def eval_stream(base_seed: int, seed_index: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([base_seed, DOMAIN_EVAL, seed_index, episode])
    )


def init_stream(base_seed: int, net_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, DOMAIN_INIT, net_index]))


class CollectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Episode:
    """One complete trajectory with its raw reward/cost channels.

    actions holds what the environment executed: an int index array for the
    discrete space, an (T, 2) float array of (steer, speed) otherwise.
    """

    obs: np.ndarray
    actions: np.ndarray
    logps: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    cost_lane: np.ndarray
    cost_coll: np.ndarray
    cost_swt: np.ndarray
    reset_seed: int
    worker_index: int
    done_reason: str

    @property
    def length(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class TrajectoryBuffer:
    episodes: tuple[Episode, ...]
    horizon: int

    def __post_init__(self):
        for i, ep in enumerate(self.episodes):
            if not 1 <= ep.length <= self.horizon:
                raise ValueError(
                    f"episode {i} has {ep.length} steps, outside [1, {self.horizon}]"
                )

    @property
    def episodes_total(self) -> int:
        return len(self.episodes)

    @property
    def steps_total(self) -> int:
        return sum(ep.length for ep in self.episodes)


@dataclass(frozen=True)
class WorkerSpec:
    worker_count: int = 4
    episodes_per_worker: int = 8
    base_seed: int = 0

    def __post_init__(self):
        if self.worker_count < 1:
            raise ValueError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.episodes_per_worker < 1:
            raise ValueError(
                f"episodes_per_worker must be >= 1, got {self.episodes_per_worker}"
            )


@dataclass(frozen=True)
class CollectReport:
    buffers: tuple[TrajectoryBuffer, ...]  # ordered by worker index
    steps_total: int
    episodes_total: int
    wall_ms: tuple[float, ...] = field(default=())

    def merged(self) -> TrajectoryBuffer:
        eps: list[Episode] = []
        for buf in self.buffers:
            eps.extend(buf.episodes)
        return TrajectoryBuffer(episodes=tuple(eps), horizon=self.buffers[0].horizon)


def run_episode(
    track: TrackMap,
    policy: NetParams,
    value: NetParams,
    env_cfg: EnvConfig,
    rng: np.random.Generator,
    worker_index: int = 0,
) -> Episode:
    """Roll one episode: reset seed drawn first, then one sample per step."""
    reset_seed = int(rng.integers(2**63))
    state, obs = reset(track, reset_seed, env_cfg)
    obs_l, act_l, logp_l, val_l = [], [], [], []
    rew_l, lane_l, coll_l, swt_l = [], [], [], []
    while True:
        dist = forward_policy(policy, obs)
        action, logp = sample_and_logprob(dist, rng)
        obs_l.append(obs)
        val_l.append(forward_value(value, obs))
        logp_l.append(logp)
        if isinstance(action, DiscreteAction):
            act_l.append(action.index)
        else:
            act_l.append((action.steer, action.speed))
        state, out = step(track, state, action, env_cfg)
        rew_l.append(out.reward)
        lane_l.append(out.cost_lane)
        coll_l.append(out.cost_coll)
        swt_l.append(out.cost_swt)
        obs = out.observation
        if out.done:
            break
    return Episode(
        obs=np.array(obs_l),
        actions=np.array(act_l),
        logps=np.array(logp_l),
        values=np.array(val_l),
        rewards=np.array(rew_l),
        cost_lane=np.array(lane_l),
        cost_coll=np.array(coll_l),
        cost_swt=np.array(swt_l),
        reset_seed=reset_seed,
        worker_index=worker_index,
        done_reason=state.done_reason,
    )


def _worker_episodes(
    track: TrackMap,
    policy: NetParams,
    value: NetParams,
    env_cfg: EnvConfig,
    spec: WorkerSpec,
    iteration: int,
    worker_index: int,
) -> tuple[TrajectoryBuffer, float]:
    t0 = time.perf_counter()
    rng = seed_stream(spec.base_seed, worker_index, iteration)
    eps = tuple(
        run_episode(track, policy, value, env_cfg, rng, worker_index)
        for _ in range(spec.episodes_per_worker)
    )
    buf = TrajectoryBuffer(episodes=eps, horizon=env_cfg.horizon)
    return buf, (time.perf_counter() - t0) * 1e3


def collect(
    track: TrackMap,
    policy: NetParams,
    value: NetParams,
    env_cfg: EnvConfig,
    spec: WorkerSpec,
    iteration: int,
) -> CollectReport:
    """Run worker_count workers concurrently; merge in worker-index order.

    Each worker owns its RNG and episode list; the snapshots are read-only,
    so the merged result is independent of scheduling.
    """
    policy = policy.copy()
    value = value.copy()
    results: list[tuple[TrajectoryBuffer, float] | None] = [None] * spec.worker_count
    with ThreadPoolExecutor(max_workers=spec.worker_count) as pool:
        futures = {
            pool.submit(
                _worker_episodes, track, policy, value, env_cfg, spec, iteration, w
            ): w
            for w in range(spec.worker_count)
        }
        for fut, w in futures.items():
            try:
                results[w] = fut.result()
            except Exception as exc:
                raise CollectionError(
                    f"worker {w} failed on seed stream "
                    f"({spec.base_seed}, {DOMAIN_ROLLOUT}, {w}, {iteration}): {exc}"
                ) from exc
    buffers = tuple(r[0] for r in results)  # type: ignore[index]
    return CollectReport(
        buffers=buffers,
        steps_total=sum(b.steps_total for b in buffers),
        episodes_total=sum(b.episodes_total for b in buffers),
        wall_ms=tuple(r[1] for r in results),  # type: ignore[index]
    )
