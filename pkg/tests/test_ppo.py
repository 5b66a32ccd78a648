import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from simgen import ppo
from simgen.env import GenEnvironment
from simgen.ppo import (
    PolicyNetwork, PpoConfig, RolloutBatch, TrainingDivergence, ValueNetwork, clipped_surrogate,
    collect_rollouts, compute_gae, log_prob, ppo_loss, ppo_objective, sample_action, train_agent,
)

from oracles import ppo_gradient_check
from stubs import StubModel, box_space, constant_stub, logistic_stub


def zero_mean_policy(dim, log_std=0.0):
    policy = PolicyNetwork(dim, (4,), np.random.default_rng(0))
    for p in policy.mlp.params:
        p[...] = 0.0
    policy.log_std[:] = log_std
    return policy


def test_log_prob_closed_forms():
    assert log_prob(zero_mean_policy(8), np.zeros(8), np.zeros(8)) == pytest.approx(-7.3515, abs=1e-4)
    assert log_prob(zero_mean_policy(8), np.zeros(8), np.zeros(8)) == pytest.approx(-4 * math.log(2 * math.pi))
    assert log_prob(zero_mean_policy(1), [0.0], [1.0]) == pytest.approx(-1.4189, abs=1e-4)


def test_density_integrates_to_one():
    policy = zero_mean_policy(1, log_std=math.log(0.7))
    grid = np.linspace(-10, 10, 20001)
    dens = np.exp(policy.log_prob_batch(np.zeros((grid.size, 1)), grid[:, None]))
    assert abs(trapezoid(dens, grid) - 1.0) < 1e-3


def test_translation_invariance():
    rng = np.random.default_rng(1)
    policy = PolicyNetwork(3, (5,), rng)
    policy.log_std[:] = [0.1, -0.4, 0.3]
    s, a = rng.normal(size=3), rng.normal(size=3)
    before = log_prob(policy, s, a)
    shift = np.array([2.0, -1.0, 0.5])
    policy.mlp.params[-1] += shift
    assert log_prob(policy, s, a + shift) == pytest.approx(before, abs=1e-12)


def test_sample_action_determinism_and_consistency():
    policy = PolicyNetwork(4, (8, 8), np.random.default_rng(2))
    s = np.ones(4)
    a1, l1 = sample_action(policy, s, np.random.default_rng(5))
    a2, l2 = sample_action(policy, s, np.random.default_rng(5))
    assert np.array_equal(a1, a2) and l1 == l2
    assert l1 == pytest.approx(log_prob(policy, s, a1), abs=1e-12)


def test_entropy_closed_form():
    policy = zero_mean_policy(2, log_std=0.5)
    assert policy.entropy() == pytest.approx(1.0 + (1 + math.log(2 * math.pi)))


def test_non_finite_output_signals_divergence():
    policy = PolicyNetwork(2, (4,), np.random.default_rng(0))
    policy.mlp.params[0][0, 0] = np.nan
    with pytest.raises(TrainingDivergence):
        sample_action(policy, np.ones(2), np.random.default_rng(0))


def test_collect_rollouts_shape_and_determinism():
    stub = logistic_stub([1.0, -1.0])
    batches = []
    for _ in range(2):
        env = GenEnvironment(stub, seed=3)
        rng = np.random.default_rng(4)
        policy = PolicyNetwork(2, (8,), rng)
        value = ValueNetwork(2, (8,), rng)
        batches.append(collect_rollouts(env, policy, value, 2048, rng))
    b = batches[0]
    assert len(b) == 2048 and b.states.shape == (2048, 2) and b.actions.shape == (2048, 2)
    assert b.dones.all()
    assert np.all((b.rewards >= -1) & (b.rewards <= 1))
    for name in ("states", "actions", "log_probs", "rewards", "values"):
        assert np.array_equal(getattr(b, name), getattr(batches[1], name))


def batch(rewards, values, dones):
    n = len(rewards)
    return RolloutBatch(np.zeros((n, 1)), np.zeros((n, 1)), np.zeros(n), np.array(rewards, float),
                        np.array(values, float), np.array(dones, bool))


def test_gae_examples():
    b = compute_gae(batch([0.9], [0.5], [True]), 0.99, 0.95)
    assert b.raw_advantages[0] == pytest.approx(0.4)
    assert b.returns[0] == pytest.approx(0.9)
    # hand recursion: delta2 = 0.5, delta1 = 1 + 0.99*0.5 - 0.5, A1 = delta1 + 0.9405*0.5
    b = compute_gae(batch([1, 1], [0.5, 0.5], [False, True]), 0.99, 0.95, last_value=0.0)
    np.testing.assert_allclose(b.raw_advantages, [1.46525, 0.5], atol=1e-12)
    b = compute_gae(batch([0.3] * 5, [0.3] * 5, [True] * 5), 0.99, 0.95)
    assert np.all(b.raw_advantages == 0)


def test_advantage_normalization():
    rng = np.random.default_rng(0)
    b = compute_gae(batch(rng.uniform(-1, 1, 500), rng.normal(size=500), [True] * 500), 0.99, 0.95)
    assert abs(b.advantages.mean()) < 1e-9
    assert abs(b.advantages.std() - 1) < 1e-9


def test_clip_arithmetic():
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)


def objective_inputs(seed, ratio_noise):
    rng = np.random.default_rng(seed)
    policy = PolicyNetwork(2, (6,), rng)
    value = ValueNetwork(2, (6,), rng)
    states = rng.normal(size=(40, 2))
    actions = policy.mean(states) + rng.normal(size=(40, 2))
    logp = policy.log_prob_batch(states, actions)
    adv = rng.normal(size=40)
    adv = (adv - adv.mean()) / adv.std()
    old = logp + ratio_noise * rng.uniform(-1, 1, 40)
    return policy, value, states, actions, old, adv, rng.normal(size=40), logp


def test_identity_ratio_gives_zero_policy_loss():
    policy, value, s, a, _, adv, ret, logp = objective_inputs(0, 0.0)
    _, (pl, _, _), _ = ppo_objective(policy, value, s, a, logp, adv, ret, PpoConfig())
    assert abs(pl) < 1e-9


def test_clipping_inactive_inside_interval():
    policy, value, s, a, old, adv, ret, logp = objective_inputs(1, 0.1)
    ratio = np.exp(logp - old)
    assert np.all(np.abs(ratio - 1) <= 0.2)
    _, (pl, _, _), _ = ppo_objective(policy, value, s, a, old, adv, ret, PpoConfig())
    assert pl == -np.mean(ratio * adv)


def test_first_update_is_vanilla_policy_gradient():
    policy, value, s, a, _, adv, ret, logp = objective_inputs(2, 0.0)
    cfg = PpoConfig(entropy_coef=0.0)
    _, _, grads = ppo_objective(policy, value, s, a, logp, adv, ret, cfg)
    # vanilla estimator: gradient of -mean(A * log pi(a|s)), by central differences
    h = 1e-6
    for p, g in zip(policy.params, grads):
        for i in np.ndindex(p.shape):
            keep = p[i]
            p[i] = keep + h
            up = -np.mean(adv * policy.log_prob_batch(s, a))
            p[i] = keep - h
            down = -np.mean(adv * policy.log_prob_batch(s, a))
            p[i] = keep
            assert g[i] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_check(seed):
    assert ppo_gradient_check(seed) < 1e-4


def test_ppo_loss_requires_advantages():
    policy, value, s, a, old, adv, ret, _ = objective_inputs(3, 0.0)
    b = RolloutBatch(s, a, old, np.zeros(40), np.zeros(40), np.ones(40, bool))
    with pytest.raises(ValueError):
        ppo_loss(policy, value, b, PpoConfig())


def test_constant_surrogate_gives_flat_curve():
    stub = StubModel(box_space(2, -1e3, 1e3), lambda rows: np.full(rows.shape[0], 0.7),
                     half_width=1e3)
    cfg = PpoConfig(total_steps=4096, rollout_size=1024, hidden=(8,), seed=1)
    _, curve = train_agent(GenEnvironment(stub, seed=2), cfg)
    assert len(curve.mean_reward) == 4
    assert all(r == pytest.approx(0.7, abs=1e-15) for r in curve.mean_reward)


def test_training_is_deterministic_and_round_trips():
    cfg = PpoConfig(total_steps=2048, rollout_size=512, hidden=(8, 8), seed=3)
    runs = [train_agent(GenEnvironment(logistic_stub([1, -1]), seed=4), cfg) for _ in range(2)]
    assert runs[0][1] == runs[1][1]
    text = ppo.dumps(runs[0][0])
    assert text == ppo.dumps(runs[1][0])
    back = ppo.loads(text)
    states = np.random.default_rng(0).normal(size=(10, 2))
    assert np.array_equal(back.policy.mean(states), runs[0][0].policy.mean(states))
    assert np.array_equal(back.policy.log_std, runs[0][0].policy.log_std)
    assert ppo.dumps(back) == text


def test_learns_stub_task():
    """logistic(w . a) rewards: the agent should push actions along w."""
    env = GenEnvironment(logistic_stub([1.0, -1.0, 0.5]), seed=11)
    bundle, curve = train_agent(env, PpoConfig(seed=12))
    first, last = np.mean(curve.mean_reward[:5]), np.mean(curve.mean_reward[-5:])
    assert last >= 0.8
    assert last - first >= 0.25
    assert np.all(bundle.policy.log_std >= ppo.LOG_STD_MIN)
    assert np.all(bundle.policy.log_std <= ppo.LOG_STD_MAX)
