"""Multiplier updates, reward shaping, GAE, and the PPO update path."""

import json
import math

import numpy as np
import pytest

from crllk.networks import backward, forward_raw, init_params, sgd_step, softmax
from crllk.rollout import Episode, TrajectoryBuffer, WorkerSpec
from crllk.simulator import EnvConfig
from crllk.trainer import (
    Gains,
    IterationStats,
    LagrangeState,
    NetConfig,
    NumericalError,
    PPOConfig,
    TrainMode,
    compute_advantages,
    critic_update,
    episode_cost_estimates,
    episode_return,
    gae,
    init_networks,
    modified_reward,
    ppo_update,
    resolve_entropy_coef,
    train_iteration,
    update_lambdas,
)
from crllk.tracks import small_loop

DISCRETE = TrainMode("crllk_discrete")
CONTINUOUS = TrainMode("crllk_continuous")


def make_episode(rng, t_len=12, head="categorical", worker=0, obs_dim=10) -> Episode:
    if head == "categorical":
        actions = rng.integers(0, 3, t_len)
    else:
        actions = rng.uniform(-1.0, 1.0, (t_len, 2))
    return Episode(
        obs=rng.standard_normal((t_len, obs_dim)),
        actions=actions,
        logps=rng.uniform(-2.0, -0.5, t_len),
        values=rng.standard_normal(t_len),
        rewards=rng.normal(0.0, 0.01, t_len),
        cost_lane=rng.uniform(0.0, 2.0, t_len),
        cost_coll=rng.integers(0, 2, t_len).astype(float),
        cost_swt=rng.integers(0, 2, t_len).astype(float),
        reset_seed=int(rng.integers(2**31)),
        worker_index=worker,
        done_reason="horizon",
    )


def make_buffer(rng, n_eps=3, head="categorical", t_len=None) -> TrajectoryBuffer:
    eps = tuple(
        make_episode(rng, t_len or int(rng.integers(5, 20)), head) for _ in range(n_eps)
    )
    return TrajectoryBuffer(episodes=eps, horizon=512)


# ---------------------------------------------------------------- lambdas


def test_lambda_step_worked_example_both_signs():
    base = LagrangeState(lambda1=0.5, alpha1=0.5, eta1=2e-5, lambda_sign="as_printed")
    out = update_lambdas(base, j_clane=0.66, j_ccoll=0.0, j_cswt=0.0)
    assert abs(out.lambda1 - 0.4999968) < 1e-12
    flipped = LagrangeState(lambda1=0.5, alpha1=0.5, eta1=2e-5, lambda_sign="dual_ascent")
    out2 = update_lambdas(flipped, j_clane=0.66, j_ccoll=0.0, j_cswt=0.0)
    assert abs(out2.lambda1 - 0.5000032) < 1e-12


def test_lambda_fixed_point_and_projection():
    s = LagrangeState(lambda1=0.5, alpha1=0.5)
    out = update_lambdas(s, j_clane=0.5, j_ccoll=s.alpha2, j_cswt=s.alpha3)
    assert out.lambda1 == 0.5  # J == alpha leaves the multiplier untouched
    assert out.lambda2 == s.lambda2 and out.lambda3 == s.lambda3
    s2 = LagrangeState(lambda1=0.1, eta1=1.0, alpha1=0.6)
    out2 = update_lambdas(s2, j_clane=0.0, j_ccoll=0.0, j_cswt=0.0)
    assert out2.lambda1 == 0.0  # projected, not negative


def test_lambda3_shares_eta2():
    s = LagrangeState(eta1=0.5, eta2=0.25, alpha3=0.0)
    out = update_lambdas(s, j_clane=s.alpha1, j_ccoll=s.alpha2, j_cswt=1.0)
    assert out.lambda3 == pytest.approx(1.0 + 0.25 * 1.0, abs=1e-15)


def test_lagrange_validation():
    with pytest.raises(ValueError):
        LagrangeState(lambda1=-0.001)
    with pytest.raises(ValueError):
        LagrangeState(alpha2=-1.0)
    with pytest.raises(ValueError):
        LagrangeState(lambda_sign="up")


# ---------------------------------------------------------- modified reward


def test_modified_reward_worked_example():
    s = LagrangeState()
    got = modified_reward(0.007, 0.4, 0.0, 0.0, s, DISCRETE)
    assert got == pytest.approx(-39.93, abs=1e-12)


def test_modified_reward_unit_lambdas_bitwise_equals_fixed_stream():
    rng = np.random.default_rng(17)
    s = LagrangeState(lambda1=1.0, lambda2=1.0, lambda3=1.0)
    mode = TrainMode("fixed_discrete")
    for _ in range(1000):
        r = rng.normal(0.0, 0.01)
        cl = rng.uniform(0.0, 3.0)
        cc = float(rng.integers(0, 2))
        got = modified_reward(r, cl, cc, 0.0, s, mode)
        assert got == 10.0 * r - 100.0 * cl - 40.0 * cc  # bitwise


def test_modified_reward_switch_term_only_in_continuous():
    s = LagrangeState(lambda3=2.0)
    base = modified_reward(0.0, 0.0, 0.0, 1.0, s, DISCRETE)
    assert base == 0.0
    cont = modified_reward(0.0, 0.0, 0.0, 1.0, s, CONTINUOUS)
    assert cont == pytest.approx(-40.0 * 2.0)


def test_modified_reward_elementwise_matches_scalar_loop():
    rng = np.random.default_rng(18)
    s = LagrangeState(lambda1=1.7, lambda2=0.3, lambda3=0.9)
    r = rng.normal(0.0, 0.01, 40)
    cl = rng.uniform(0.0, 2.0, 40)
    cc = rng.integers(0, 2, 40).astype(float)
    cs = rng.integers(0, 2, 40).astype(float)
    arr = modified_reward(r, cl, cc, cs, s, CONTINUOUS)
    scal = np.array(
        [modified_reward(*t, s, CONTINUOUS) for t in zip(r, cl, cc, cs)]
    )
    assert np.array_equal(arr, scal)


# ------------------------------------------------------------ cost estimates


def test_episode_cost_estimates_brute_force():
    rng = np.random.default_rng(19)
    buf = make_buffer(rng, n_eps=4)
    j_clane, j_ccoll, j_cswt = episode_cost_estimates(buf)
    want_lane = np.mean([ep.cost_lane.mean() for ep in buf.episodes])
    want_coll = np.mean([ep.cost_coll.sum() for ep in buf.episodes])
    want_swt = np.mean([ep.cost_swt.sum() for ep in buf.episodes])
    assert j_clane == pytest.approx(want_lane, abs=1e-15)
    assert j_ccoll == pytest.approx(want_coll, abs=1e-15)
    assert j_cswt == pytest.approx(want_swt, abs=1e-15)
    want_ret = np.mean([ep.rewards.sum() for ep in buf.episodes])
    assert episode_return(buf) == pytest.approx(want_ret, abs=1e-15)


def test_cost_estimates_reject_empty_buffer():
    with pytest.raises(ValueError):
        episode_cost_estimates(TrajectoryBuffer(episodes=(), horizon=512))


# ----------------------------------------------------------------------- gae


def test_gae_lambda_one_equals_discounted_monte_carlo():
    rng = np.random.default_rng(20)
    for _ in range(50):
        t_len = int(rng.integers(1, 60))
        rewards = rng.normal(0.0, 1.0, t_len)
        values = rng.normal(0.0, 1.0, t_len)
        gamma = float(rng.uniform(0.5, 0.999))
        adv = gae(rewards, values, gamma, 1.0)
        returns = np.zeros(t_len)
        acc = 0.0
        for t in range(t_len - 1, -1, -1):
            acc = rewards[t] + gamma * acc
            returns[t] = acc
        np.testing.assert_allclose(adv, returns - values, atol=1e-10)


def test_gae_lambda_zero_is_td_residual():
    rng = np.random.default_rng(21)
    rewards = rng.normal(0.0, 1.0, 30)
    values = rng.normal(0.0, 1.0, 30)
    adv = gae(rewards, values, 0.95, 0.0)
    v_next = np.append(values[1:], 0.0)
    np.testing.assert_allclose(adv, rewards + 0.95 * v_next - values, atol=1e-12)


def test_gae_zero_input_zero_output():
    adv = gae(np.zeros(10), np.zeros(10), 0.95, 0.95)
    assert np.all(adv == 0.0)


def test_compute_advantages_targets_and_modified_stream():
    rng = np.random.default_rng(22)
    buf = make_buffer(rng, n_eps=2, head="gaussian2d")
    s = LagrangeState(lambda1=1.4, lambda2=0.5, lambda3=2.0)
    adv, targets = compute_advantages(buf, s, CONTINUOUS, 0.95, 0.9)
    np.testing.assert_allclose(targets - adv, np.concatenate([ep.values for ep in buf.episodes]), atol=1e-12)
    want = []
    for ep in buf.episodes:
        r_hat = (
            10.0 * ep.rewards
            - (100.0 * 1.4) * ep.cost_lane
            - (40.0 * 0.5) * ep.cost_coll
            - (40.0 * 2.0) * ep.cost_swt
        )
        want.append(gae(r_hat, ep.values, 0.95, 0.9))
    np.testing.assert_allclose(adv, np.concatenate(want), atol=1e-12)


# ------------------------------------------------------------------ updates


def _ratio_one_setup(n=24, seed=23):
    """Buffer whose stored logps equal the current policy's, so ratio == 1."""
    rng = np.random.default_rng(seed)
    policy = init_params(10, (8, 8), "categorical", np.random.default_rng(seed + 1))
    obs = rng.standard_normal((n, 10))
    actions = rng.integers(0, 3, n)
    z, _ = forward_raw(policy, obs)
    logp_all = np.log(softmax(z))
    logps = logp_all[np.arange(n), actions]
    ep = Episode(
        obs=obs,
        actions=actions,
        logps=logps,
        values=np.zeros(n),
        rewards=np.zeros(n),
        cost_lane=np.zeros(n),
        cost_coll=np.zeros(n),
        cost_swt=np.zeros(n),
        reset_seed=0,
        worker_index=0,
        done_reason="horizon",
    )
    buf = TrajectoryBuffer(episodes=(ep,), horizon=512)
    adv = rng.standard_normal(n)
    return policy, buf, obs, actions, adv


def test_ppo_at_ratio_one_equals_vanilla_policy_gradient():
    policy, buf, obs, actions, adv = _ratio_one_setup()
    n = len(adv)
    cfg = PPOConfig(
        epochs=1, minibatch=n, entropy_coef=0.0, normalize_advantages=False
    )
    new, _ = ppo_update(policy, buf, adv, cfg, eta3=0.01, rng=np.random.default_rng(77))
    # oracle: same permutation, REINFORCE gradient of mean(adv * log pi)
    perm = np.random.default_rng(77).permutation(n)
    o, a, ad = obs[perm], actions[perm], adv[perm]
    z, cache = forward_raw(policy, o)
    probs = softmax(z)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), a.astype(int)] = 1.0
    d_obj = ad[:, None] * (onehot - probs)
    grads = backward(policy, cache, -d_obj / n)
    want = policy.copy()
    sgd_step(want, grads, 0.01)
    assert new.allclose(want)


def test_ppo_zero_advantage_zero_entropy_is_identity():
    policy, buf, _, _, _ = _ratio_one_setup(seed=29)
    cfg = PPOConfig(epochs=3, minibatch=8, entropy_coef=0.0)
    before = policy.copy()
    new, loss = ppo_update(
        policy, buf, np.zeros(buf.steps_total), cfg, eta3=0.5, rng=np.random.default_rng(1)
    )
    assert new.allclose(before)
    assert loss == 0.0


def test_ppo_bandit_shifts_probability_toward_advantaged_action():
    rng = np.random.default_rng(30)
    policy = init_params(4, (8,), "categorical", rng)
    n = 30
    obs = np.tile(np.ones(4), (n, 1))
    actions = np.arange(n) % 3
    z, _ = forward_raw(policy, obs)
    logps = np.log(softmax(z))[np.arange(n), actions]
    adv = np.where(actions == 0, 1.0, -1.0)
    ep = Episode(
        obs=obs, actions=actions, logps=logps, values=np.zeros(n),
        rewards=np.zeros(n), cost_lane=np.zeros(n), cost_coll=np.zeros(n),
        cost_swt=np.zeros(n), reset_seed=0, worker_index=0, done_reason="horizon",
    )
    buf = TrajectoryBuffer(episodes=(ep,), horizon=512)
    p_before = softmax(forward_raw(policy, obs[:1])[0])[0]
    cfg = PPOConfig(epochs=4, minibatch=n, entropy_coef=0.0, normalize_advantages=False)
    new, _ = ppo_update(policy, buf, adv, cfg, eta3=0.1, rng=np.random.default_rng(2))
    p_after = softmax(forward_raw(new, obs[:1])[0])[0]
    assert p_after[0] > p_before[0]
    assert p_after[1] < p_before[1] and p_after[2] < p_before[2]


def test_ppo_nan_advantage_raises_and_leaves_params_untouched():
    policy, buf, _, _, adv = _ratio_one_setup(seed=31)
    before = policy.copy()
    adv = adv.copy()
    adv[3] = np.nan
    cfg = PPOConfig(epochs=1, minibatch=len(adv), normalize_advantages=False)
    with pytest.raises(NumericalError, match="policy loss"):
        ppo_update(policy, buf, adv, cfg, eta3=0.01, rng=np.random.default_rng(3))
    assert policy.allclose(before)


def test_ppo_rejects_length_mismatch():
    policy, buf, _, _, adv = _ratio_one_setup(seed=32)
    with pytest.raises(ValueError):
        ppo_update(policy, buf, adv[:-1], PPOConfig(), 0.01, np.random.default_rng(0))


def test_critic_update_on_exact_targets_is_identity():
    rng = np.random.default_rng(33)
    critic = init_params(10, (8,), "value", rng)
    buf = make_buffer(np.random.default_rng(34), n_eps=2)
    obs = np.concatenate([ep.obs for ep in buf.episodes])
    targets = forward_raw(critic, obs)[0][:, 0]
    before = critic.copy()
    new, loss = critic_update(
        critic, buf, targets, PPOConfig(epochs=2, minibatch=16), 0.1, np.random.default_rng(4)
    )
    assert new.allclose(before)
    assert loss == 0.0


def test_critic_single_step_matches_linear_least_squares_gradient():
    rng = np.random.default_rng(35)
    critic = init_params(6, (), "value", rng, out_scale=1.0)  # purely linear
    n = 20
    obs = rng.standard_normal((n, 6))
    targets = rng.standard_normal(n)
    ep = Episode(
        obs=obs, actions=np.zeros(n, dtype=int), logps=np.zeros(n), values=np.zeros(n),
        rewards=np.zeros(n), cost_lane=np.zeros(n), cost_coll=np.zeros(n),
        cost_swt=np.zeros(n), reset_seed=0, worker_index=0, done_reason="horizon",
    )
    buf = TrajectoryBuffer(episodes=(ep,), horizon=512)
    w0, b0 = critic.weights[0].copy(), critic.biases[0].copy()
    lr = 0.05
    new, _ = critic_update(
        critic, buf, targets, PPOConfig(epochs=1, minibatch=n), lr, np.random.default_rng(5)
    )
    perm = np.random.default_rng(5).permutation(n)
    o, y = obs[perm], targets[perm]
    err = o @ w0[:, 0] + b0[0] - y
    gw = o.T @ (2.0 * err / n)
    gb = (2.0 * err / n).sum()
    np.testing.assert_allclose(new.weights[0][:, 0], w0[:, 0] - lr * gw, atol=1e-14)
    np.testing.assert_allclose(new.biases[0][0], b0[0] - lr * gb, atol=1e-14)


def test_critic_regression_reduces_mse():
    rng = np.random.default_rng(36)
    critic = init_params(10, (16,), "value", rng, out_scale=1.0)
    buf = make_buffer(np.random.default_rng(37), n_eps=3, t_len=30)
    obs = np.concatenate([ep.obs for ep in buf.episodes])
    targets = np.sin(obs[:, 0]) + 0.5 * obs[:, 1]
    mse0 = float(np.mean((forward_raw(critic, obs)[0][:, 0] - targets) ** 2))
    cfg = PPOConfig(epochs=40, minibatch=32)
    new, _ = critic_update(critic, buf, targets, cfg, 0.05, np.random.default_rng(6))
    mse1 = float(np.mean((forward_raw(new, obs)[0][:, 0] - targets) ** 2))
    assert mse1 < 0.5 * mse0


# --------------------------------------------------------------- iteration


def test_entropy_coef_defaults():
    assert resolve_entropy_coef(PPOConfig(), "categorical") == 0.01
    assert resolve_entropy_coef(PPOConfig(), "gaussian2d") == 0.0
    assert resolve_entropy_coef(PPOConfig(entropy_coef=0.5), "categorical") == 0.5


def test_mode_and_config_validation():
    with pytest.raises(ValueError):
        TrainMode("crllk_tabular")
    with pytest.raises(ValueError):
        PPOConfig(gamma=1.5)
    with pytest.raises(ValueError):
        PPOConfig(optimizer="rmsprop")
    rb = TrainMode("robust_baseline")
    assert not rb.continuous and not rb.adaptive and rb.head == "categorical"
    assert CONTINUOUS.head == "gaussian2d" and CONTINUOUS.adaptive


def test_stats_json_dict_shape():
    stats = IterationStats(
        iteration=3, j_r=1.0, j_clane=0.5, j_ccoll=2.0, j_cswt=0.0,
        lambda1=1.1, lambda2=0.9, lambda3=1.0, policy_loss=-0.01, value_loss=0.4,
        steps=100, episodes=4,
    )
    d = stats.to_json_dict()
    assert list(d.keys()) == [
        "iter", "J_R", "J_clane", "J_ccoll", "J_cswt",
        "lambda1", "lambda2", "lambda3", "policy_loss", "value_loss", "wall_ms",
    ]
    assert d["wall_ms"] is None
    assert json.dumps(d).endswith('"wall_ms": null}')


def _one_iteration(mode_name: str, alpha1: float):
    mode = TrainMode(mode_name)
    env = EnvConfig(horizon=24)
    track = small_loop()
    lagrange = LagrangeState(alpha1=alpha1, eta1=0.01)
    policy, critic = init_networks(mode, env, NetConfig(hidden=(8, 8)), base_seed=0)
    spec = WorkerSpec(worker_count=1, episodes_per_worker=2, base_seed=0)
    return train_iteration(
        track, env, policy, critic, lagrange, mode, PPOConfig(minibatch=16), spec, 0
    )


def test_train_iteration_adaptive_raises_lambda_when_violated():
    _, _, lag, stats, report = _one_iteration("crllk_discrete", alpha1=0.0)
    assert stats.j_clane > 0.0
    assert lag.lambda1 > 1.0  # dual ascent on a violated constraint
    assert stats.lambda1 == lag.lambda1  # stats reports the post-update value
    assert report.episodes_total == 2
    assert stats.steps == report.steps_total


def test_train_iteration_fixed_mode_keeps_lambdas():
    _, _, lag, stats, _ = _one_iteration("fixed_discrete", alpha1=0.0)
    assert (lag.lambda1, lag.lambda2, lag.lambda3) == (1.0, 1.0, 1.0)
    assert (stats.lambda1, stats.lambda2, stats.lambda3) == (1.0, 1.0, 1.0)
