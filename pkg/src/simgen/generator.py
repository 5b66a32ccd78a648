"""Synthesize parameter rows with a trained policy and summarize them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ParameterSpace, destandardize
from .env import RewardConfig, validity_mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratedDataset:
    space: ParameterSpace
    rows_raw: np.ndarray
    predicted: np.ndarray
    valid: np.ndarray
    provenance: dict = field(default_factory=dict)
    reasons: np.ndarray | None = None

    def __post_init__(self):
        n = self.rows_raw.shape[0]
        if self.predicted.shape != (n,) or self.valid.shape != (n,):
            raise ValueError("predicted and valid must have one entry per row")

    def __len__(self):
        return self.rows_raw.shape[0]


@dataclass(frozen=True)
class RangeSummary:
    names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.lower, self.upper])

    def to_dict(self) -> dict:
        return {n: [float(lo), float(hi)] for n, lo, hi in zip(self.names, self.lower, self.upper)}


def generate_batch(bundle, model, n: int, seed: int, reward: RewardConfig = RewardConfig(),
                   provenance: dict | None = None) -> GeneratedDataset:
    """Sample ``n`` actions on fresh standard-normal states and score them with the surrogate."""
    dim = model.space.dim
    if bundle.dim != dim:
        raise ValueError(f"policy has {bundle.dim} action dims, surrogate has {dim} parameters")
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((n, dim))
    actions, _ = bundle.policy.sample_batch(states, rng)
    with np.errstate(over="ignore", invalid="ignore"):
        rows = destandardize(actions, model.scaling)
    valid, reasons = validity_mask(model.space, np.asarray(model.train_ranges), rows,
                                   reward.range_margin)
    predicted = model.predict_rows(rows)
    prov = {"seed": int(seed)}
    prov.update(provenance or {})
    return GeneratedDataset(model.space, rows, predicted, valid, prov, reasons)


def filter_valid(gd: GeneratedDataset) -> tuple[GeneratedDataset, float]:
    """Keep rows flagged valid; also return the retained fraction."""
    keep = gd.valid
    frac = float(keep.mean()) if len(gd) else 0.0
    if not keep.any():
        log.warning("no generated rows survived filtering")
    out = replace(gd, rows_raw=gd.rows_raw[keep], predicted=gd.predicted[keep],
                  valid=gd.valid[keep],
                  reasons=None if gd.reasons is None else gd.reasons[keep])
    return out, frac


def summarize_ranges(gd: GeneratedDataset) -> RangeSummary:
    rows = gd.rows_raw[gd.valid]
    if rows.shape[0] == 0:
        raise ValueError("no valid rows to summarize")
    return RangeSummary(tuple(gd.space.names), rows.min(axis=0), rows.max(axis=0))


def histogram_outcomes(values, bins: int = 10) -> np.ndarray:
    """Equal-width counts over [0, 1]; the last bin is closed on the right."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    v = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(v)) or np.any((v < 0) | (v > 1)):
        raise ValueError("histogram values must lie in [0, 1]")
    counts, _ = np.histogram(v, bins=bins, range=(0.0, 1.0))
    return counts


def normalize_outcomes(values, outcome_range) -> np.ndarray:
    lo, hi = outcome_range
    v = np.asarray(values, dtype=float)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0) if hi > lo else np.full_like(v, 0.5)
