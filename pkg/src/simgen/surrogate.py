"""Gradient-boosted regression trees used as the simulation surrogate.

Exact greedy split search, second-order leaf values, logistic link for binary
outcomes and identity link for regression.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .data import Dataset, ParameterSpace, ScalingStats, derive_matrix, fit_scaling

MODEL_VERSION = 1
TASKS = ("binary", "regression")


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    subsample: float = 1.0
    seed: int = 0
    # raw parameter name -> +1 (non-decreasing) or -1 (non-increasing)
    monotone: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "monotone", dict(self.monotone))
        if any(v not in (-1, 1) for v in self.monotone.values()):
            raise ValueError("monotone directions must be +1 or -1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf holding ``value[k]``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.max_depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] < self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]

    def depth(self) -> int:
        def walk(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(walk(self.left[k]), walk(self.right[k]))
        return walk(0)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict, max_depth: int) -> "RegressionTree":
        return cls(
            np.asarray(raw["feature"], dtype=np.int64),
            np.asarray(raw["threshold"], dtype=float),
            np.asarray(raw["left"], dtype=np.int64),
            np.asarray(raw["right"], dtype=np.int64),
            np.asarray(raw["value"], dtype=float),
            max_depth,
        )


@dataclass
class SurrogateModel:
    task: str
    base_score: float
    trees: list
    learning_rate: float
    feature_count: int
    space: ParameterSpace
    scaling: ScalingStats
    train_ranges: np.ndarray  # (dim, 2) raw-parameter min/max of the training rows
    outcome_range: tuple  # training-outcome (min, max)
    max_depth: int = 4
    train_loss: list = field(default_factory=list, compare=False)

    def raw_score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.feature_count:
            raise ValueError(f"model expects {self.feature_count} features, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return self.base_score + self.learning_rate * total

    def predict(self, X) -> np.ndarray:
        raw = self.raw_score(X)
        return expit(raw) if self.task == "binary" else raw

    def predict_rows(self, rows_raw) -> np.ndarray:
        """Predict from raw physical parameters (derived features computed here)."""
        return self.predict(derive_matrix(self.space, rows_raw))


def predict(model: SurrogateModel, features) -> np.ndarray | float:
    """Prediction for a feature vector (returns float) or a feature matrix."""
    arr = np.asarray(features, dtype=float)
    out = model.predict(arr)
    return float(out[0]) if arr.ndim == 1 else out


# -- split search -----------------------------------------------------------

def _exact_prefix(values: np.ndarray) -> list:
    """Prefix sums as exact integers in units of 2**shift, plus shift."""
    parts = [math.frexp(float(v)) for v in values]
    exps = [e - 53 for m, e in parts if m != 0.0]
    shift = min(exps) if exps else 0
    acc, out = 0, [0]
    for m, e in parts:
        if m != 0.0:
            acc += int(m * (1 << 53)) << (e - 53 - shift)
        out.append(acc)
    return out, shift


def _int_to_float(num: int, shift: int) -> float:
    # int / int true division is correctly rounded, same as math.fsum.
    if shift >= 0:
        return float(num << shift)
    return num / (1 << -shift)


def _gain(gl, hl, gr, hr, g, h):
    return gl * gl / hl + gr * gr / hr - g * g / h


def best_split(x, gradients, hessians, min_leaf: int = 1, *, monotone: int = 0,
               bounds=(-math.inf, math.inf)):
    """Best threshold for one feature column, or ``None``.

    Candidates are midpoints between consecutive distinct sorted values; the
    left child takes ``x < threshold``. The gain is
    ``GL^2/HL + GR^2/HR - G^2/H`` with child sums correctly rounded, so the
    result does not depend on summation order. Ties go to the smallest
    threshold.

    With ``monotone`` = +1/-1 only candidates whose child values (clamped to
    ``bounds``) are ordered in that direction are admissible.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(gradients, dtype=float)
    h = np.asarray(hessians, dtype=float)
    if not (x.shape == g.shape == h.shape):
        raise ValueError("feature, gradient and hessian lengths differ")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    n = x.shape[0]
    if n < 2 * min_leaf:
        return None
    order = np.argsort(x, kind="stable")
    xs, gs, hs = x[order], g[order], h[order]
    left_n = np.arange(1, n)
    cg = np.cumsum(gs)[:-1]
    ch = np.cumsum(hs)[:-1]
    G, H = cg[-1] + gs[-1], ch[-1] + hs[-1]
    ok = (xs[:-1] < xs[1:]) & (left_n >= min_leaf) & (n - left_n >= min_leaf)
    if monotone:
        with np.errstate(divide="ignore", invalid="ignore"):
            vl = np.clip(cg / ch, *bounds)
            vr = np.clip((G - cg) / (H - ch), *bounds)
        ok &= monotone * (vr - vl) >= 0
    cand = np.flatnonzero(ok)
    if cand.size == 0:
        return None
    hl, hr = ch[cand], H - ch[cand]
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where((hl > 0) & (hr > 0),
                         cg[cand] ** 2 / hl + (G - cg[cand]) ** 2 / hr, -np.inf)
    top = score.max()
    # Approximate scores only pick a shortlist; the winner is decided on exact sums.
    slack = 1e-7 * (abs(top) + np.abs(gs).sum() ** 2 / max(abs(H), 1e-300)) if np.isfinite(top) else 0.0
    shortlist = cand[score >= top - slack] if np.isfinite(top) else cand
    if shortlist.size <= 32:
        def sums(i):
            return (math.fsum(gs[:i + 1]), math.fsum(hs[:i + 1]),
                    math.fsum(gs[i + 1:]), math.fsum(hs[i + 1:]))
        Gx, Hx = math.fsum(gs), math.fsum(hs)
    else:
        pg, sg = _exact_prefix(gs)
        ph, sh = _exact_prefix(hs)

        def sums(i):
            return (_int_to_float(pg[i + 1], sg), _int_to_float(ph[i + 1], sh),
                    _int_to_float(pg[-1] - pg[i + 1], sg), _int_to_float(ph[-1] - ph[i + 1], sh))
        Gx, Hx = _int_to_float(pg[-1], sg), _int_to_float(ph[-1], sh)
    if not Hx > 0:
        return None
    best = None
    for i in shortlist:
        gl, hl_, gr, hr_ = sums(int(i))
        if not (hl_ > 0 and hr_ > 0):
            continue
        gain = _gain(gl, hl_, gr, hr_, Gx, Hx)
        if best is None or gain > best[1]:
            best = (0.5 * (xs[i] + xs[i + 1]), gain)
    if best is None:
        return None
    return float(best[0]), float(best[1])


def feature_constraints(space: ParameterSpace, monotone: dict) -> list:
    """Per-feature monotone direction (+1, -1, 0) or ``None`` when the feature must not be split on.

    Raw parameters take their declared direction. A derived feature inherits the
    direction its operands imply; if two constrained operands disagree, or an
    operand's sign (needed for products and ratios) is unknown, the feature is
    excluded so the constraint cannot leak through it.
    """
    for name in monotone:
        space.index(name)
    out = [int(monotone.get(n, 0)) for n in space.names]

    def sign(k):
        spec = space.specs[k]
        if spec.plausibility in ("positive", "nonnegative", "unit-interval") or spec.lower >= 0:
            return 1
        if spec.plausibility == "negative" or spec.upper <= 0:
            return -1
        return 0

    for d in space.derived:
        i, j = d.operands
        if d.kind == "difference":
            slopes = {i: 1, j: -1}
        elif d.kind == "product":
            slopes = {i: sign(j), j: sign(i)}
        else:
            slopes = {i: sign(j), j: -sign(i)}
        wanted = set()
        for k, slope in slopes.items():
            c = int(monotone.get(space.names[k], 0))
            if c:
                wanted.add(c * slope if slope else None)
        if not wanted:
            out.append(0)
        elif len(wanted) == 1 and None not in wanted:
            out.append(wanted.pop())
        else:
            out.append(None)
    return out


def _grow_tree(X, g, h, idx, cfg: GbdtConfig, constraints=None) -> RegressionTree:
    feature, threshold, left, right, value = [], [], [], [], []
    constraints = constraints or [0] * X.shape[1]

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def newton(rows):
        hs = math.fsum(h[rows])
        return math.fsum(g[rows]) / hs if hs > 0 else 0.0

    def build(rows, depth, lo, hi):
        k = new_node()
        split = None
        if depth < cfg.max_depth and rows.size >= 2 * cfg.min_samples_leaf:
            # Fixed feature order; strictly-greater comparison keeps the lowest index on ties.
            for f in range(X.shape[1]):
                c = constraints[f]
                if c is None:
                    continue
                res = best_split(X[rows, f], g[rows], h[rows], cfg.min_samples_leaf,
                                 monotone=c, bounds=(lo, hi))
                if res is not None and res[1] > 0 and (split is None or res[1] > split[2]):
                    split = (f, res[0], res[1])
        if split is None:
            value[k] = min(max(newton(rows), lo), hi)
            return k
        f, thr, _ = split
        mask = X[rows, f] < thr
        feature[k] = f
        threshold[k] = thr
        lo_l = lo_r = lo
        hi_l = hi_r = hi
        c = constraints[f]
        if c:
            mid = 0.5 * (min(max(newton(rows[mask]), lo), hi) + min(max(newton(rows[~mask]), lo), hi))
            if c > 0:
                hi_l, lo_r = mid, mid
            else:
                lo_l, hi_r = mid, mid
        left[k] = build(rows[mask], depth + 1, lo_l, hi_l)
        right[k] = build(rows[~mask], depth + 1, lo_r, hi_r)
        return k

    build(idx, 0, -math.inf, math.inf)
    return RegressionTree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(value, dtype=float), cfg.max_depth,
    )


def _loss(task, y, raw):
    if task == "binary":
        # log(1 + e^raw) - y*raw, computed stably
        return float(np.mean(np.logaddexp(0.0, raw) - y * raw))
    return float(np.mean((y - raw) ** 2))


def fit(train: Dataset, cfg: GbdtConfig = GbdtConfig(), task: str = "binary") -> SurrogateModel:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if len(train) == 0:
        raise ValueError("training set is empty")
    y = train.outcomes
    raw_rows = train.rows[:, :train.space.dim]
    X = train.rows if train.featurized else derive_matrix(train.space, train.rows)
    if task == "binary":
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("binary task needs 0/1 outcomes")
        rate = y.mean()
        if rate in (0.0, 1.0):
            raise ValueError("binary task needs both classes in the training data")
        base = math.log(rate / (1 - rate))
    else:
        base = float(np.mean(y))
    scaling = train.scaling if train.scaling is not None else fit_scaling(
        Dataset(train.space, raw_rows, y))
    model = SurrogateModel(
        task=task, base_score=base, trees=[], learning_rate=cfg.learning_rate,
        feature_count=X.shape[1], space=train.space, scaling=scaling,
        train_ranges=np.column_stack([raw_rows.min(axis=0), raw_rows.max(axis=0)]),
        outcome_range=(float(y.min()), float(y.max())), max_depth=cfg.max_depth,
    )
    constraints = feature_constraints(train.space, cfg.monotone) if cfg.monotone else None
    rng = np.random.default_rng(cfg.seed)
    raw = np.full(len(y), base)
    model.train_loss.append(_loss(task, y, raw))
    n_sub = max(1, int(round(cfg.subsample * len(y))))
    for _ in range(cfg.n_trees):
        if task == "binary":
            p = expit(raw)
            g, h = y - p, p * (1 - p)
        else:
            g, h = y - raw, np.ones_like(y)
        idx = np.arange(len(y)) if n_sub == len(y) else np.sort(rng.choice(len(y), n_sub, replace=False))
        tree = _grow_tree(X, g, h, idx, cfg, constraints)
        model.trees.append(tree)
        raw = raw + cfg.learning_rate * tree.predict(X)
        model.train_loss.append(_loss(task, y, raw))
    return model


# -- serialization ------------------------------------------------------------

def model_to_dict(model: SurrogateModel) -> dict:
    return {
        "version": MODEL_VERSION,
        "task": model.task,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "max_depth": model.max_depth,
        "feature_count": model.feature_count,
        "trees": [t.to_dict() for t in model.trees],
        "space": model.space.to_dict(),
        "scaling": {"mean": model.scaling.mean.tolist(), "std": model.scaling.std.tolist()},
        "train_ranges": model.train_ranges.tolist(),
        "outcome_range": list(model.outcome_range),
    }


def model_from_dict(raw: dict) -> SurrogateModel:
    if raw.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {raw.get('version')!r}")
    depth = int(raw["max_depth"])
    return SurrogateModel(
        task=raw["task"], base_score=float(raw["base_score"]),
        trees=[RegressionTree.from_dict(t, depth) for t in raw["trees"]],
        learning_rate=float(raw["learning_rate"]), feature_count=int(raw["feature_count"]),
        space=ParameterSpace.from_dict(raw["space"]),
        scaling=ScalingStats(np.array(raw["scaling"]["mean"]), np.array(raw["scaling"]["std"])),
        train_ranges=np.array(raw["train_ranges"], dtype=float),
        outcome_range=tuple(raw["outcome_range"]), max_depth=depth,
    )


def dumps(model: SurrogateModel) -> str:
    # json writes floats with repr, so a reload reproduces predictions bit-for-bit.
    return json.dumps(model_to_dict(model), indent=1) + "\n"


def loads(text: str) -> SurrogateModel:
    return model_from_dict(json.loads(text))
