"""Proximal Policy Optimization for the one-step generation environment.

Networks are small tanh MLPs written directly in numpy with hand-derived
backward passes; everything runs in float64 and is deterministic given the
seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

LOG_2PI = math.log(2 * math.pi)
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
BUNDLE_VERSION = 1


class TrainingDivergence(RuntimeError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    rollout_size: int = 2048
    minibatch: int = 64
    epochs_per_update: int = 10
    total_steps: int = 40_960
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    hidden: tuple = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.rollout_size < 1 or self.minibatch < 1 or self.epochs_per_update < 1:
            raise ValueError("rollout_size, minibatch and epochs_per_update must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def orthogonal(shape, gain, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class MLP:
    """tanh hidden layers, linear output. ``params`` alternates W (in, out) and b."""

    def __init__(self, sizes, rng=None, out_gain=1.0, params=None):
        self.sizes = tuple(int(s) for s in sizes)
        if params is not None:
            self.params = [np.array(p, dtype=float) for p in params]
            return
        self.params = []
        n_layers = len(self.sizes) - 1
        for k in range(n_layers):
            gain = out_gain if k == n_layers - 1 else math.sqrt(2)
            self.params.append(orthogonal((self.sizes[k], self.sizes[k + 1]), gain, rng))
            self.params.append(np.zeros(self.sizes[k + 1]))

    def forward(self, x):
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for k in range(n_layers):
            z = h @ self.params[2 * k] + self.params[2 * k + 1]
            h = np.tanh(z) if k < n_layers - 1 else z
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, acts, dout):
        grads = [None] * len(self.params)
        n_layers = len(self.params) // 2
        d = dout
        for k in reversed(range(n_layers)):
            if k < n_layers - 1:
                d = d * (1.0 - acts[k + 1] ** 2)
            grads[2 * k] = acts[k].T @ d
            grads[2 * k + 1] = d.sum(axis=0)
            d = d @ self.params[2 * k].T
        return grads


class PolicyNetwork:
    """Diagonal Gaussian with state-dependent mean and state-independent log std."""

    def __init__(self, dim, hidden=(64, 64), rng=None, mlp=None, log_std=None):
        self.dim = dim
        self.mlp = mlp if mlp is not None else MLP((dim, *hidden, dim), rng, out_gain=0.01)
        self.log_std = np.zeros(dim) if log_std is None else np.array(log_std, dtype=float)

    @property
    def params(self):
        return self.mlp.params + [self.log_std]

    def mean(self, states):
        return self.mlp(np.atleast_2d(states))

    def log_prob_batch(self, states, actions):
        mu = self.mean(states)
        z = (np.atleast_2d(actions) - mu) * np.exp(-self.log_std)
        return -0.5 * np.sum(z * z, axis=1) - np.sum(self.log_std) - 0.5 * self.dim * LOG_2PI

    def entropy(self):
        return float(np.sum(self.log_std) + 0.5 * self.dim * (1.0 + LOG_2PI))

    def sample_batch(self, states, rng):
        mu = self.mean(states)
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(self.log_std)):
            raise TrainingDivergence("policy produced non-finite output")
        noise = rng.standard_normal(mu.shape)
        actions = mu + np.exp(self.log_std) * noise
        return actions, self.log_prob_batch(states, actions)


class ValueNetwork:
    def __init__(self, dim, hidden=(64, 64), rng=None, mlp=None):
        self.mlp = mlp if mlp is not None else MLP((dim, *hidden, 1), rng, out_gain=1.0)

    @property
    def params(self):
        return self.mlp.params

    def __call__(self, states):
        return self.mlp(np.atleast_2d(states))[:, 0]


def sample_action(policy: PolicyNetwork, state, rng):
    state = np.asarray(state, dtype=float)
    if state.shape != (policy.dim,):
        raise ValueError(f"state must have length {policy.dim}")
    actions, logp = policy.sample_batch(state[None, :], rng)
    return actions[0], float(logp[0])


def log_prob(policy: PolicyNetwork, state, action) -> float:
    return float(policy.log_prob_batch(np.asarray(state)[None, :], np.asarray(action)[None, :])[0])


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class RolloutBatch:
    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    raw_advantages: np.ndarray | None = None

    def __len__(self):
        return self.rewards.shape[0]


def collect_rollouts(env, policy: PolicyNetwork, value: ValueNetwork, n: int, rng) -> RolloutBatch:
    """``n`` one-step transitions; states come from the environment's own generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    states = env.sample_states(n)
    actions, logps = policy.sample_batch(states, rng)
    rewards = env.compute_rewards(actions)
    return RolloutBatch(states, actions, logps, rewards, value(states), np.ones(n, dtype=bool))


def compute_gae(batch: RolloutBatch, gamma: float, lam: float, last_value: float = 0.0,
                normalize: bool = True) -> RolloutBatch:
    n = len(batch)
    adv = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        nonterminal = 0.0 if batch.dones[t] else 1.0
        next_value = batch.values[t + 1] if t + 1 < n else last_value
        delta = batch.rewards[t] + gamma * next_value * nonterminal - batch.values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    batch.raw_advantages = adv
    batch.returns = adv + batch.values
    if normalize:
        centred = adv - adv.mean()
        std = centred.std()
        batch.advantages = centred / std if std > 0 else centred
    else:
        batch.advantages = adv.copy()
    return batch


def clipped_surrogate(ratio, advantages, eps):
    """Per-sample min(r A, clip(r, 1-eps, 1+eps) A)."""
    ratio = np.asarray(ratio, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    return np.minimum(ratio * advantages, np.clip(ratio, 1 - eps, 1 + eps) * advantages)


def ppo_objective(policy, value, states, actions, old_log_probs, advantages, returns,
                  cfg: PpoConfig, with_grads: bool = True):
    """Total loss, its parts and (optionally) gradients for policy.params + value.params."""
    B = states.shape[0]
    mu, p_acts = policy.mlp.forward(states)
    inv_std = np.exp(-policy.log_std)
    z = (actions - mu) * inv_std
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(policy.log_std) - 0.5 * policy.dim * LOG_2PI
    ratio = np.exp(logp - old_log_probs)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * advantages
    policy_loss = -float(np.mean(clipped_surrogate(ratio, advantages, cfg.clip_eps)))

    v, v_acts = value.mlp.forward(states)
    v = v[:, 0]
    value_loss = float(np.mean((v - returns) ** 2))
    entropy = policy.entropy()
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not math.isfinite(total):
        raise TrainingDivergence("non-finite PPO loss")
    parts = (policy_loss, value_loss, entropy)
    if not with_grads:
        return total, parts, None

    # d(policy_loss)/d(logp): only the unclipped branch carries gradient.
    dlogp = np.where(surr1 <= surr2, -ratio * advantages / B, 0.0)
    dmu = dlogp[:, None] * z * inv_std
    dlog_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0) - cfg.entropy_coef
    grads = policy.mlp.backward(p_acts, dmu) + [dlog_std]
    dv = (cfg.value_coef * 2.0 / B) * (v - returns)
    grads += value.mlp.backward(v_acts, dv[:, None])
    return total, parts, grads


def ppo_loss(policy, value, batch: RolloutBatch, cfg: PpoConfig):
    """(policy_loss, value_loss, entropy) over the whole batch."""
    if batch.advantages is None:
        raise ValueError("advantages not computed; call compute_gae first")
    _, parts, _ = ppo_objective(policy, value, batch.states, batch.actions, batch.log_probs,
                                batch.advantages, batch.returns, cfg, with_grads=False)
    return parts


@dataclass
class PolicyBundle:
    policy: PolicyNetwork
    value: ValueNetwork
    cfg: PpoConfig
    optimizer: Adam | None = None

    @property
    def dim(self):
        return self.policy.dim

    @property
    def params(self):
        return self.policy.params + self.value.params


@dataclass
class TrainingCurve:
    step: list = field(default_factory=list)
    mean_reward: list = field(default_factory=list)
    policy_loss: list = field(default_factory=list)
    value_loss: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.step, self.mean_reward, self.policy_loss, self.value_loss))


def init_bundle(dim: int, cfg: PpoConfig, rng) -> PolicyBundle:
    policy = PolicyNetwork(dim, cfg.hidden, rng)
    value = ValueNetwork(dim, cfg.hidden, rng)
    bundle = PolicyBundle(policy, value, cfg)
    bundle.optimizer = Adam(bundle.params, lr=cfg.learning_rate)
    return bundle


def update(bundle: PolicyBundle, batch: RolloutBatch, rng):
    """One PPO update (several epochs of shuffled minibatches); returns mean losses of last epoch."""
    cfg = bundle.cfg
    n = len(batch)
    params = bundle.params
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        p_losses, v_losses = [], []
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            _, (pl, vl, _), grads = ppo_objective(
                bundle.policy, bundle.value, batch.states[idx], batch.actions[idx],
                batch.log_probs[idx], batch.advantages[idx], batch.returns[idx], cfg)
            bundle.optimizer.step(params, grads)
            np.clip(bundle.policy.log_std, LOG_STD_MIN, LOG_STD_MAX, out=bundle.policy.log_std)
            p_losses.append(pl)
            v_losses.append(vl)
    if not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingDivergence("non-finite network parameters after update")
    return float(np.mean(p_losses)), float(np.mean(v_losses))


def train_agent(env, cfg: PpoConfig = PpoConfig(), progress=None):
    if cfg.total_steps < cfg.rollout_size:
        raise ValueError("total_steps must be >= rollout_size")
    rng = np.random.default_rng(cfg.seed)
    bundle = init_bundle(env.dim, cfg, rng)
    curve = TrainingCurve()
    steps = 0
    for _ in range(cfg.total_steps // cfg.rollout_size):
        batch = collect_rollouts(env, bundle.policy, bundle.value, cfg.rollout_size, rng)
        compute_gae(batch, cfg.gamma, cfg.gae_lambda)
        pl, vl = update(bundle, batch, rng)
        steps += len(batch)
        curve.step.append(steps)
        curve.mean_reward.append(float(batch.rewards.mean()))
        curve.policy_loss.append(pl)
        curve.value_loss.append(vl)
        if progress is not None:
            progress(steps, curve.mean_reward[-1])
    return bundle, curve


# -- serialization ------------------------------------------------------------

def bundle_to_dict(bundle: PolicyBundle) -> dict:
    cfg = asdict(bundle.cfg)
    cfg["hidden"] = list(cfg["hidden"])
    return {
        "version": BUNDLE_VERSION,
        "dims": {"state": bundle.dim, "action": bundle.dim, "hidden": list(bundle.cfg.hidden)},
        "policy_weights": [p.tolist() for p in bundle.policy.mlp.params],
        "log_std": bundle.policy.log_std.tolist(),
        "value_weights": [p.tolist() for p in bundle.value.mlp.params],
        "cfg": cfg,
    }


def bundle_from_dict(raw: dict) -> PolicyBundle:
    if raw.get("version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported policy version {raw.get('version')!r}")
    names = {f.name for f in fields(PpoConfig)}
    cfg = PpoConfig(**{k: v for k, v in raw["cfg"].items() if k in names})
    dim = int(raw["dims"]["action"])
    hidden = tuple(raw["dims"]["hidden"])
    policy = PolicyNetwork(dim, mlp=MLP((dim, *hidden, dim), params=raw["policy_weights"]),
                           log_std=raw["log_std"])
    value = ValueNetwork(dim, mlp=MLP((dim, *hidden, 1), params=raw["value_weights"]))
    return PolicyBundle(policy, value, cfg)


def dumps(bundle: PolicyBundle) -> str:
    return json.dumps(bundle_to_dict(bundle)) + "\n"


def loads(text: str) -> PolicyBundle:
    return bundle_from_dict(json.loads(text))
