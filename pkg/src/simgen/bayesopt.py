"""Gaussian-process Bayesian optimization with expected improvement.

Inputs are mapped to the unit cube and observed values standardized before
the GP sees them. Length scales are chosen from a fixed log grid by marginal
likelihood (an isotropic pass, then one coordinate sweep), so a study is
fully reproducible from its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import norm

N_RANDOM_CANDIDATES = 1024
N_LOCAL_CANDIDATES = 64
LOCAL_STEP = 0.05  # perturbation scale around the incumbent, unit-cube units
LENGTH_GRID = np.logspace(-1.5, 0.5, 9)
HYPER_SUBSET = 200


def expected_improvement(mu, sigma, best):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be >= 0")
    diff = mu - best
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(sigma > 0, diff / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = np.where(sigma > 0, diff * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(diff, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


class GPModel:
    """Zero-mean GP, unit signal variance, squared-exponential ARD kernel."""

    def __init__(self, length_scales, noise: float = 1e-6):
        self.length_scales = np.asarray(length_scales, dtype=float)
        self.noise = noise
        self.X = None

    def kernel(self, A, B):
        a = A / self.length_scales
        b = B / self.length_scales
        d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
        return np.exp(-0.5 * np.maximum(d2, 0.0))

    def fit(self, X, y):
        self.X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        std = float(y.std())
        self.y_std = std if std > 0 else 1.0
        self.z = (y - self.y_mean) / self.y_std
        K = self.kernel(self.X, self.X)
        jitter = self.noise
        while True:
            try:
                self.L = cholesky(K + jitter * np.eye(len(K)), lower=True)
                break
            except np.linalg.LinAlgError:
                if jitter > 1e-2:
                    raise
                jitter *= 10.0
        self.jitter = jitter
        self.alpha = cho_solve((self.L, True), self.z)
        return self

    def log_marginal_likelihood(self) -> float:
        n = len(self.z)
        return float(-0.5 * self.z @ self.alpha - np.log(np.diag(self.L)).sum()
                     - 0.5 * n * math.log(2 * math.pi))

    def predict(self, Xq):
        """Posterior mean and standard deviation in original value units."""
        Ks = self.kernel(np.atleast_2d(Xq), self.X)
        mu = Ks @ self.alpha
        v = solve_triangular(self.L, Ks.T, lower=True)
        var = np.maximum(1.0 - (v * v).sum(0), 0.0)
        return self.y_mean + self.y_std * mu, self.y_std * np.sqrt(var)


def fit_gp(X, y, noise: float = 1e-6) -> GPModel:
    """Pick ARD length scales from ``LENGTH_GRID`` by marginal likelihood, then fit on all data."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    if len(X) > HYPER_SUBSET:
        sub = np.linspace(0, len(X) - 1, HYPER_SUBSET).round().astype(int)
        Xh, yh = X[sub], y[sub]
    else:
        Xh, yh = X, y

    def score(ls):
        try:
            return GPModel(ls, noise).fit(Xh, yh).log_marginal_likelihood()
        except np.linalg.LinAlgError:
            return -np.inf

    scores = [score(np.full(d, s)) for s in LENGTH_GRID]
    ls = np.full(d, LENGTH_GRID[int(np.argmax(scores))])
    best = max(scores)
    for k in range(d):
        for s in LENGTH_GRID:
            if s == ls[k]:
                continue
            trial = ls.copy()
            trial[k] = s
            val = score(trial)
            if val > best:
                best, ls = val, trial
    return GPModel(ls, noise).fit(X, y)


@dataclass
class BOStudy:
    ranges: np.ndarray  # (d, 2)
    n_init: int = 20
    seed: int = 0
    names: tuple = ()
    trials: list = field(default_factory=list)  # (params, value)
    best_history: list = field(default_factory=list)

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        if self.ranges.ndim != 2 or self.ranges.shape[1] != 2:
            raise ValueError("ranges must be a (d, 2) array")
        if not np.all(np.isfinite(self.ranges)) or np.any(self.ranges[:, 0] > self.ranges[:, 1]):
            raise ValueError("ranges must be finite with lo <= hi")

    @property
    def dim(self):
        return self.ranges.shape[0]

    @property
    def best(self):
        finite = [(p, v) for p, v in self.trials if np.isfinite(v)]
        if not finite:
            return None, -np.inf
        # first occurrence wins ties
        i = int(np.argmax([v for _, v in finite]))
        return finite[i]

    def to_unit(self, X):
        span = self.ranges[:, 1] - self.ranges[:, 0]
        return (np.asarray(X) - self.ranges[:, 0]) / np.where(span > 0, span, 1.0)

    def from_unit(self, U):
        span = self.ranges[:, 1] - self.ranges[:, 0]
        X = self.ranges[:, 0] + np.asarray(U) * span
        return np.clip(X, self.ranges[:, 0], self.ranges[:, 1])

    def observed(self):
        ok = [(p, v) for p, v in self.trials if np.isfinite(v)]
        if not ok:
            return np.empty((0, self.dim)), np.empty(0)
        return self.to_unit(np.array([p for p, _ in ok])), np.array([v for _, v in ok])

    def add(self, params, value):
        self.trials.append((np.asarray(params, dtype=float), float(value)))
        self.best_history.append(self.best[1])

    def to_dict(self) -> dict:
        best_p, best_v = self.best
        return {
            "names": list(self.names),
            "ranges": self.ranges.tolist(),
            "n_init": self.n_init,
            "seed": self.seed,
            "trials": [{"params": p.tolist(), "value": v} for p, v in self.trials],
            "best": {"params": None if best_p is None else best_p.tolist(), "value": best_v},
        }


def uniform_draw(ranges, rng) -> np.ndarray:
    ranges = np.asarray(ranges, dtype=float)
    return ranges[:, 0] + (ranges[:, 1] - ranges[:, 0]) * rng.random(ranges.shape[0])


def suggest_next(study: BOStudy, gp: GPModel | None, rng) -> np.ndarray:
    U, y = study.observed()
    if len(study.trials) < study.n_init or len(y) == 0:
        return uniform_draw(study.ranges, rng)
    if gp is None:
        gp = fit_gp(U, y)
    d = study.dim
    cand = rng.random((N_RANDOM_CANDIDATES, d))
    u_best = study.to_unit(study.best[0])
    local = np.clip(u_best + LOCAL_STEP * rng.standard_normal((N_LOCAL_CANDIDATES, d)), 0.0, 1.0)
    cand = np.vstack([cand, local])
    mu, sigma = gp.predict(cand)
    ei = expected_improvement(mu, sigma, float(y.max()))
    return study.from_unit(cand[int(np.argmax(ei))])


def run_study(objective, ranges, n_trials: int, n_init: int = 20, seed: int = 0,
              names=(), refit_every: int = 50) -> BOStudy:
    """Maximize ``objective`` over the box ``ranges``; non-finite values count as failed trials."""
    if not n_trials >= n_init >= 1:
        raise ValueError("need n_trials >= n_init >= 1")
    study = BOStudy(ranges, n_init=n_init, seed=seed, names=tuple(names))
    rng = np.random.default_rng(seed)
    gp, length_scales = None, None
    for t in range(n_trials):
        if t >= n_init:
            U, y = study.observed()
            if len(y):
                if length_scales is None or (t - n_init) % refit_every == 0:
                    gp = fit_gp(U, y)
                    length_scales = gp.length_scales
                else:
                    gp = GPModel(length_scales).fit(U, y)
        x = suggest_next(study, gp, rng)
        try:
            value = float(objective(x))
        except (ArithmeticError, ValueError):
            value = -math.inf
        if not math.isfinite(value):
            value = -math.inf
        study.add(x, value)
    return study


@dataclass
class ContourGrid:
    pair: tuple  # (i, j) parameter indices
    names: tuple
    axis_i: np.ndarray
    axis_j: np.ndarray
    values: np.ndarray  # values[a, b] at (axis_i[a], axis_j[b])
    baseline: np.ndarray

    @property
    def resolution(self):
        return self.values.shape[0]


def contour_grid(model, pair, ranges, resolution: int = 50, baseline=None) -> ContourGrid:
    i, j = pair
    ranges = np.asarray(ranges, dtype=float)
    if i == j:
        raise ValueError("contour pair needs two distinct parameters")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    base = ranges.mean(axis=1) if baseline is None else np.asarray(baseline, dtype=float)
    if np.any(base < ranges[:, 0]) or np.any(base > ranges[:, 1]):
        raise ValueError("baseline lies outside the study ranges")
    ai = np.linspace(ranges[i, 0], ranges[i, 1], resolution)
    aj = np.linspace(ranges[j, 0], ranges[j, 1], resolution)
    rows = np.tile(base, (resolution * resolution, 1))
    rows[:, i] = np.repeat(ai, resolution)
    rows[:, j] = np.tile(aj, resolution)
    values = model.predict_rows(rows).reshape(resolution, resolution)
    names = tuple(model.space.names[k] for k in (i, j)) if hasattr(model, "space") else ()
    return ContourGrid((i, j), names, ai, aj, values, base)
