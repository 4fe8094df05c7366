"""One-timescale Lagrangian PPO.

Each iteration collects a fresh batch, builds a modified-reward stream whose
cost weights are scaled by the current Lagrange multipliers, runs clipped
PPO on the policy and MSE regression on the critic, and then updates the
multipliers from the *same* batch's undiscounted cost estimates. Fixed
baseline modes keep every multiplier frozen at 1, which makes the modified
reward bitwise-equal to the classic weighted-sum reward.

Units worth remembering: lane cost is in decimeters, collision and switch
costs are per-step indicators, raw reward is meters of forward progress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import TrackMap
from .networks import (
    NetParams,
    backward,
    forward_raw,
    gaussian_entropy,
    gaussian_head,
    gaussian_head_derivs,
    gaussian_logprob,
    init_params,
    sgd_step,
    adam_step,
    AdamState,
    softmax,
)
from .rollout import (
    CollectReport,
    TrajectoryBuffer,
    WorkerSpec,
    collect,
    init_stream,
    update_stream,
)
from .simulator import EnvConfig

MODE_NAMES = (
    "crllk_discrete",
    "crllk_continuous",
    "fixed_discrete",
    "fixed_continuous",
    "robust_baseline",
)


class NumericalError(RuntimeError):
    """A non-finite value surfaced during an update; the run must abort."""


@dataclass(frozen=True)
class Gains:
    g_r: float = 10.0
    g_lane: float = 100.0
    g_coll: float = 40.0
    g_swt: float = 40.0


@dataclass(frozen=True)
class TrainMode:
    """Training variant plus its reward gains.

    crllk_* adapt the multipliers every iteration; fixed_* (and robust_baseline,
    which is the fixed-weight discrete variant under another name) keep them
    frozen at 1. The switch-cost term applies only to continuous variants.
    """

    name: str
    gains: Gains = Gains()

    def __post_init__(self):
        if self.name not in MODE_NAMES:
            raise ValueError(f"unknown mode {self.name!r}, expected one of {MODE_NAMES}")

    @property
    def continuous(self) -> bool:
        return self.name.endswith("_continuous")

    @property
    def adaptive(self) -> bool:
        return self.name.startswith("crllk")

    @property
    def head(self) -> str:
        return "gaussian2d" if self.continuous else "categorical"


@dataclass(frozen=True)
class LagrangeState:
    """Multipliers, constraint thresholds, and the run's learning rates.

    alpha1 is in decimeters of average lane deviation; alpha2 and alpha3 are
    expected collisions / lane switches per episode. lambda3 reuses eta2
    since the switch constraint mirrors the collision one.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    alpha1: float = 0.5
    alpha2: float = 0.02
    alpha3: float = 0.1
    eta1: float = 2e-5
    eta2: float = 2e-5
    eta3_policy: float = 2e-5
    eta4_critic: float = 1e-5
    lambda_sign: str = "dual_ascent"

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.lambda_sign not in ("dual_ascent", "as_printed"):
            raise ValueError(
                f"lambda_sign must be 'dual_ascent' or 'as_printed', got {self.lambda_sign!r}"
            )


def modified_reward(
    r: float, c_lane: float, c_coll: float, c_swt: float, lagrange: LagrangeState, mode: TrainMode
):
    """Scalar (or elementwise array) modified reward.

    g_r*r - g_lane*λ1*c_lane - g_coll*λ2*c_coll, minus the switch term in
    continuous modes. With all λ = 1 this reproduces the fixed-weight
    baseline stream exactly, including rounding.
    """
    g = mode.gains
    out = g.g_r * r - (g.g_lane * lagrange.lambda1) * c_lane - (g.g_coll * lagrange.lambda2) * c_coll
    if mode.continuous:
        out = out - (g.g_swt * lagrange.lambda3) * c_swt
    return out


def episode_cost_estimates(buffer: TrajectoryBuffer) -> tuple[float, float, float]:
    """Undiscounted constraint estimates: J_clane averages the per-step lane
    cost within each episode; collision and switch costs are episode sums.
    All three are then averaged across episodes."""
    if buffer.episodes_total == 0:
        raise ValueError("cost estimates need at least one episode")
    j_clane = float(np.mean([ep.cost_lane.mean() for ep in buffer.episodes]))
    j_ccoll = float(np.mean([ep.cost_coll.sum() for ep in buffer.episodes]))
    j_cswt = float(np.mean([ep.cost_swt.sum() for ep in buffer.episodes]))
    return j_clane, j_ccoll, j_cswt


def episode_return(buffer: TrajectoryBuffer) -> float:
    """Mean per-episode sum of raw rewards (meters of progress)."""
    return float(np.mean([ep.rewards.sum() for ep in buffer.episodes]))


def _step_lambda(lam: float, eta: float, j: float, alpha: float, sign: str) -> float:
    if sign == "dual_ascent":
        return max(0.0, lam + eta * (j - alpha))
    return max(0.0, lam - eta * (j - alpha))


def update_lambdas(
    lagrange: LagrangeState, j_clane: float, j_ccoll: float, j_cswt: float
) -> LagrangeState:
    """Projected multiplier step for all three constraints.

    dual_ascent (default) raises a multiplier while its constraint is
    violated; as_printed applies the opposite sign. Projection keeps every
    multiplier nonnegative. Thresholds, rates, and sign ride along unchanged.
    """
    s = lagrange.lambda_sign
    return replace(
        lagrange,
        lambda1=_step_lambda(lagrange.lambda1, lagrange.eta1, j_clane, lagrange.alpha1, s),
        lambda2=_step_lambda(lagrange.lambda2, lagrange.eta2, j_ccoll, lagrange.alpha2, s),
        lambda3=_step_lambda(lagrange.lambda3, lagrange.eta2, j_cswt, lagrange.alpha3, s),
    )


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 256
    # None picks the head default: 0.01 for the categorical policy, 0.0 for
    # the gaussian one.
    entropy_coef: float | None = None
    normalize_advantages: bool = True
    optimizer: str = "sgd"  # "sgd" or "adam"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_eps <= 0:
            raise ValueError(f"clip_eps must be positive, got {self.clip_eps}")
        if self.epochs < 1 or self.minibatch < 1:
            raise ValueError("epochs and minibatch must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


def resolve_entropy_coef(cfg: PPOConfig, head: str) -> float:
    if cfg.entropy_coef is not None:
        return cfg.entropy_coef
    return 0.01 if head == "categorical" else 0.0


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimation over one episode, bootstrapping zero
    past the last step (episodes end by terminal or horizon, and the horizon
    is the planning horizon, not a truncation)."""
    t_len = len(rewards)
    adv = np.empty(t_len)
    running = 0.0
    for t in range(t_len - 1, -1, -1):
        v_next = values[t + 1] if t + 1 < t_len else 0.0
        delta = rewards[t] + gamma * v_next - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


def compute_advantages(
    buffer: TrajectoryBuffer,
    lagrange: LagrangeState,
    mode: TrainMode,
    gamma: float,
    gae_lambda: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step advantages and critic targets over the modified-reward
    stream, flattened in episode order. targets = advantages + value_old."""
    advs, targets = [], []
    for ep in buffer.episodes:
        r_hat = modified_reward(
            ep.rewards, ep.cost_lane, ep.cost_coll, ep.cost_swt, lagrange, mode
        )
        a = gae(r_hat, ep.values, gamma, gae_lambda)
        advs.append(a)
        targets.append(a + ep.values)
    return np.concatenate(advs), np.concatenate(targets)


def flatten_buffer(buffer: TrajectoryBuffer) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    obs = np.concatenate([ep.obs for ep in buffer.episodes])
    actions = np.concatenate([ep.actions for ep in buffer.episodes])
    logp_old = np.concatenate([ep.logps for ep in buffer.episodes])
    return obs, actions, logp_old


def _raise_if_bad(arr: np.ndarray, what: str, epoch: int, start: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(
            f"non-finite {what} in epoch {epoch}, minibatch offset {start} "
            f"(|max|={np.max(np.abs(arr[np.isfinite(arr)]), initial=0.0):.3e})"
        )


def _policy_minibatch(
    params: NetParams,
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    adv: np.ndarray,
    clip_eps: float,
    entropy_coef: float,
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Loss and parameter gradients for one minibatch of the clipped
    surrogate (gradient of the *negated* objective, ready for descent)."""
    m = len(adv)
    z, cache = forward_raw(params, obs)
    if params.head == "categorical":
        probs = softmax(z)
        logp_all = np.log(np.clip(probs, 1e-300, None))
        idx = actions.astype(int)
        logp_new = logp_all[np.arange(m), idx]
        ratio = np.exp(logp_new - logp_old)
        s1 = ratio * adv
        s2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
        coeff = np.where(s1 <= s2, ratio * adv, 0.0)
        onehot = np.zeros_like(probs)
        onehot[np.arange(m), idx] = 1.0
        d_obj = coeff[:, None] * (onehot - probs)
        entropy = -(probs * logp_all).sum(axis=1)
        if entropy_coef != 0.0:
            d_obj += entropy_coef * (-probs * (logp_all + entropy[:, None]))
    else:
        mu, sigma = gaussian_head(z)
        logp_new = gaussian_logprob(mu, sigma, actions)
        ratio = np.exp(logp_new - logp_old)
        s1 = ratio * adv
        s2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
        coeff = np.where(s1 <= s2, ratio * adv, 0.0)
        dmu_dz, dsigma_dz = gaussian_head_derivs(z)
        res = (actions - mu) / sigma
        d_obj = np.empty_like(z)
        d_obj[:, :2] = coeff[:, None] * (res / sigma) * dmu_dz
        d_obj[:, 2:] = coeff[:, None] * ((res * res - 1.0) / sigma) * dsigma_dz
        entropy = gaussian_entropy(sigma)
        if entropy_coef != 0.0:
            d_obj[:, 2:] += entropy_coef * dsigma_dz / sigma
    loss = -(float(np.minimum(s1, s2).mean()) + entropy_coef * float(entropy.mean()))
    return loss, backward(params, cache, -d_obj / m)


def ppo_update(
    params: NetParams,
    buffer: TrajectoryBuffer,
    advantages: np.ndarray,
    cfg: PPOConfig,
    eta3: float,
    rng: np.random.Generator,
) -> tuple[NetParams, float]:
    """Clipped-surrogate policy update; returns fresh params and mean loss.

    Gradients flow only where the unclipped branch is active (s1 <= s2).
    Advantages are normalized within each minibatch. Any non-finite
    intermediate aborts with NumericalError, leaving the input untouched.
    """
    new = params.copy()
    obs, actions, logp_old = flatten_buffer(buffer)
    n = len(advantages)
    if n != len(obs):
        raise ValueError(f"advantages length {n} != buffer steps {len(obs)}")
    entropy_coef = resolve_entropy_coef(cfg, params.head)
    adam = AdamState.for_params(new) if cfg.optimizer == "adam" else None
    losses = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            sel = perm[start : start + cfg.minibatch]
            a = advantages[sel]
            if cfg.normalize_advantages:
                a = (a - a.mean()) / (a.std() + 1e-8)
            loss, grads = _policy_minibatch(
                new, obs[sel], actions[sel], logp_old[sel], a, cfg.clip_eps, entropy_coef
            )
            if not math.isfinite(loss):
                raise NumericalError(
                    f"non-finite policy loss in epoch {epoch}, minibatch offset {start}"
                )
            if adam is not None:
                adam_step(new, grads, adam, eta3)
            else:
                sgd_step(new, grads, eta3)
            losses.append(loss)
    for w in new.weights:
        _raise_if_bad(w, "policy weights after update", cfg.epochs, -1)
    return new, float(np.mean(losses))


def critic_update(
    params: NetParams,
    buffer: TrajectoryBuffer,
    targets: np.ndarray,
    cfg: PPOConfig,
    eta4: float,
    rng: np.random.Generator,
) -> tuple[NetParams, float]:
    """Minibatch MSE regression of the value head onto the GAE targets."""
    new = params.copy()
    obs, _, _ = flatten_buffer(buffer)
    n = len(targets)
    if n != len(obs):
        raise ValueError(f"targets length {n} != buffer steps {len(obs)}")
    adam = AdamState.for_params(new) if cfg.optimizer == "adam" else None
    losses = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            sel = perm[start : start + cfg.minibatch]
            z, cache = forward_raw(new, obs[sel])
            _raise_if_bad(z, "critic output", epoch, start)
            err = z[:, 0] - targets[sel]
            loss = float(np.mean(err * err))
            grads = backward(new, cache, (2.0 * err / len(sel))[:, None])
            if adam is not None:
                adam_step(new, grads, adam, eta4)
            else:
                sgd_step(new, grads, eta4)
            losses.append(loss)
    for w in new.weights:
        _raise_if_bad(w, "critic weights after update", cfg.epochs, -1)
    return new, float(np.mean(losses))


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    j_r: float
    j_clane: float
    j_ccoll: float
    j_cswt: float
    lambda1: float
    lambda2: float
    lambda3: float
    policy_loss: float
    value_loss: float
    steps: int
    episodes: int
    # Wall time never lands in the stats stream itself (the stream must be
    # reproducible byte-for-byte); a timing sidecar carries the real numbers.
    wall_ms: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "iter": self.iteration,
            "J_R": self.j_r,
            "J_clane": self.j_clane,
            "J_ccoll": self.j_ccoll,
            "J_cswt": self.j_cswt,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "policy_loss": self.policy_loss,
            "value_loss": self.value_loss,
            "wall_ms": None,
        }


@dataclass(frozen=True)
class NetConfig:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    policy_out_scale: float = 0.01


def init_networks(
    mode: TrainMode, env: EnvConfig, net: NetConfig, base_seed: int
) -> tuple[NetParams, NetParams]:
    """Seeded policy/critic pair; net index 0 is the policy, 1 the critic."""
    policy = init_params(
        env.obs_dim,
        net.hidden,
        mode.head,
        init_stream(base_seed, 0),
        activation=net.activation,
        out_scale=net.policy_out_scale,
    )
    value = init_params(
        env.obs_dim,
        net.hidden,
        "value",
        init_stream(base_seed, 1),
        activation=net.activation,
        out_scale=1.0,
    )
    return policy, value


def train_iteration(
    track: TrackMap,
    env: EnvConfig,
    policy: NetParams,
    critic: NetParams,
    lagrange: LagrangeState,
    mode: TrainMode,
    ppo: PPOConfig,
    workers: WorkerSpec,
    iteration: int,
) -> tuple[NetParams, NetParams, LagrangeState, IterationStats, CollectReport]:
    """One full cycle: collect, estimate costs, update policy, critic, and
    (in adaptive modes) the multipliers, all from the same batch."""
    report = collect(track, policy, critic, env, workers, iteration)
    buffer = report.merged()
    j_clane, j_ccoll, j_cswt = episode_cost_estimates(buffer)
    j_r = episode_return(buffer)
    advantages, targets = compute_advantages(buffer, lagrange, mode, ppo.gamma, ppo.gae_lambda)
    rng = update_stream(workers.base_seed, iteration)
    policy2, policy_loss = ppo_update(policy, buffer, advantages, ppo, lagrange.eta3_policy, rng)
    critic2, value_loss = critic_update(critic, buffer, targets, ppo, lagrange.eta4_critic, rng)
    lagrange2 = update_lambdas(lagrange, j_clane, j_ccoll, j_cswt) if mode.adaptive else lagrange
    stats = IterationStats(
        iteration=iteration,
        j_r=j_r,
        j_clane=j_clane,
        j_ccoll=j_ccoll,
        j_cswt=j_cswt,
        lambda1=lagrange2.lambda1,
        lambda2=lagrange2.lambda2,
        lambda3=lagrange2.lambda3,
        policy_loss=policy_loss,
        value_loss=value_loss,
        steps=buffer.steps_total,
        episodes=buffer.episodes_total,
    )
    return policy2, critic2, lagrange2, stats, report
