"""One-step generation environment.

States are standard-normal draws, actions are standardized parameter vectors.
Every episode ends after one action, so the successor state is just a fresh
draw from the reset distribution and the discounted term of the value
recursion never contributes: V(s) = E_a[R(s, a)].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import destandardize


@dataclass(frozen=True)
class RewardConfig:
    direction: str = "maximize"
    invalid_penalty: float = -1.0
    range_margin: float = 0.1

    def __post_init__(self):
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"direction must be maximize or minimize, got {self.direction!r}")
        if not self.invalid_penalty < 0:
            raise ValueError("invalid_penalty must be negative")
        if not self.range_margin >= 0:
            raise ValueError("range_margin must be >= 0")


def validity_mask(space, train_ranges, rows_raw, margin: float):
    """Vectorised validity check; returns (valid mask, reason per row or '')."""
    rows = np.atleast_2d(np.asarray(rows_raw, dtype=float))
    n = rows.shape[0]
    reasons = np.full(n, "", dtype=object)
    finite = np.all(np.isfinite(rows), axis=1)
    reasons[~finite] = "non-finite"
    lo = train_ranges[:, 0] - margin * (train_ranges[:, 1] - train_ranges[:, 0])
    hi = train_ranges[:, 1] + margin * (train_ranges[:, 1] - train_ranges[:, 0])
    with np.errstate(invalid="ignore"):
        for k, spec in enumerate(space.specs):
            col = rows[:, k]
            bad = (reasons == "") & ~spec.plausible(col)
            reasons[bad] = f"implausible: {spec.name}"
        for k, spec in enumerate(space.specs):
            col = rows[:, k]
            bad = (reasons == "") & ((col < lo[k]) | (col > hi[k]))
            reasons[bad] = f"out-of-range: {spec.name}"
    return reasons == "", reasons


class GenEnvironment:
    def __init__(self, model, reward: RewardConfig = RewardConfig(), seed: int = 0):
        self.model = model
        self.reward = reward
        self.space = model.space
        self.dim = model.space.dim
        if self.dim == 0:
            raise ValueError("environment needs at least one parameter")
        self.train_ranges = np.asarray(model.train_ranges, dtype=float)
        if self.train_ranges.shape != (self.dim, 2) or not np.all(np.isfinite(self.train_ranges)) \
                or np.any(self.train_ranges[:, 0] > self.train_ranges[:, 1]):
            raise ValueError("train_ranges must be finite (min, max) pairs, one per parameter")
        self.rng_seed = seed
        self.rng = np.random.default_rng(seed)
        self.state = None

    def reset(self) -> np.ndarray:
        self.state = self.rng.standard_normal(self.dim)
        return self.state

    def sample_states(self, n: int) -> np.ndarray:
        return self.rng.standard_normal((n, self.dim))

    def to_raw(self, actions) -> np.ndarray:
        return destandardize(actions, self.model.scaling)

    def check_validity_batch(self, rows_raw):
        return validity_mask(self.space, self.train_ranges, rows_raw, self.reward.range_margin)

    def check_validity(self, action_raw) -> tuple[bool, str]:
        a = np.asarray(action_raw, dtype=float)
        if a.shape != (self.dim,):
            raise ValueError(f"action must have length {self.dim}")
        valid, reason = self.check_validity_batch(a[None, :])
        return bool(valid[0]), str(reason[0])

    def outcome_value(self, predictions) -> np.ndarray:
        """Map surrogate predictions to [0, 1] (regression: min-max by training outcomes)."""
        p = np.asarray(predictions, dtype=float)
        if self.model.task == "binary":
            return p
        lo, hi = self.model.outcome_range
        span = hi - lo
        return np.clip((p - lo) / span, 0.0, 1.0) if span > 0 else np.full_like(p, 0.5)

    def compute_rewards(self, actions) -> np.ndarray:
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if actions.shape[1] != self.dim:
            raise ValueError(f"actions must have {self.dim} columns")
        with np.errstate(over="ignore", invalid="ignore"):
            raw = self.to_raw(actions)
        valid, _ = self.check_validity_batch(raw)
        rewards = np.full(actions.shape[0], float(self.reward.invalid_penalty))
        if valid.any():
            value = self.outcome_value(self.model.predict_rows(raw[valid]))
            rewards[valid] = value if self.reward.direction == "maximize" else 1.0 - value
        return rewards

    def compute_reward(self, action) -> float:
        a = np.asarray(action, dtype=float)
        if a.shape != (self.dim,):
            raise ValueError(f"action must have length {self.dim}")
        return float(self.compute_rewards(a[None, :])[0])

    def step(self, action):
        reward = self.compute_reward(action)
        self.state = self.rng.standard_normal(self.dim)
        return self.state, reward, True
