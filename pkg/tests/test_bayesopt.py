import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from simgen.bayesopt import (
    BOStudy, GPModel, contour_grid, expected_improvement, fit_gp, run_study, suggest_next,
)

from stubs import constant_stub, logistic_stub


def test_ei_examples():
    assert expected_improvement(0.3, 0.0, 0.3) == 0.0
    assert expected_improvement(0.3, 1.0, 0.3) == pytest.approx(0.39894, abs=1e-5)
    assert expected_improvement(1.3, 1e-12, 0.3) == pytest.approx(1.0, abs=1e-9)
    assert expected_improvement(1.3, 0.0, 0.3) == 1.0
    assert expected_improvement(0.1, 0.0, 0.3) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 3), st.floats(-5, 5))
def test_ei_nonnegative(mu, sigma, best):
    assert expected_improvement(mu, sigma, best) >= 0.0


@pytest.mark.parametrize("mu,sigma,best", [(0.0, 1.0, 0.5), (1.0, 0.3, 0.2), (-1.0, 2.0, 1.5)])
def test_ei_matches_quadrature(mu, sigma, best):
    # E[max(Y - best, 0)] for Y ~ N(mu, sigma^2), by direct integration
    val, _ = quad(lambda y: (y - best) * norm.pdf(y, mu, sigma), best, mu + 12 * sigma)
    assert expected_improvement(mu, sigma, best) == pytest.approx(val, abs=1e-8)


def test_gp_reproduces_observations():
    rng = np.random.default_rng(0)
    for d in (1, 2, 4):
        X = rng.random((30, d))
        y = 5.0 * np.sin(3 * X).sum(axis=1) + 2.0
        gp = fit_gp(X, y)
        mu, sigma = gp.predict(X)
        tol = gp.y_std * (3 * math.sqrt(gp.noise)) + 1e-6
        assert np.all(np.abs(mu - y) <= tol)
        assert np.all(sigma >= 0)


def test_gp_jitter_escalates_on_duplicates():
    X = np.zeros((5, 2))
    gp = GPModel([1e6, 1e6], noise=1e-16).fit(X, np.arange(5.0))
    assert gp.jitter > 1e-16


def test_initial_phase_is_uniform():
    study = BOStudy(np.array([[0.0, 2.0], [-1.0, 1.0]]), n_init=5)
    a = suggest_next(study, None, np.random.default_rng(3))
    rng = np.random.default_rng(3)
    assert np.array_equal(a, np.array([0.0, -1.0]) + np.array([2.0, 2.0]) * rng.random(2))


def test_suggestions_never_leave_ranges():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        d = int(rng.integers(1, 5))
        lo = rng.normal(0, 10, d)
        ranges = np.column_stack([lo, lo + rng.uniform(0, 5, d)])
        if rng.random() < 0.1:
            ranges[0, 1] = ranges[0, 0]  # degenerate axis
        study = BOStudy(ranges, n_init=int(rng.integers(1, 5)))
        for _ in range(int(rng.integers(0, 8))):
            x = ranges[:, 0] + (ranges[:, 1] - ranges[:, 0]) * rng.random(d)
            study.add(x, rng.normal() if rng.random() > 0.1 else -math.inf)
        U, y = study.observed()
        gp = GPModel(rng.uniform(0.05, 2, d)).fit(U, y) if len(y) else None
        x = suggest_next(study, gp, rng)
        assert x.shape == (d,)
        assert np.all(x >= ranges[:, 0]) and np.all(x <= ranges[:, 1])


def test_one_dimensional_quadratic():
    study = run_study(lambda x: -(x[0] - 0.3) ** 2, [[0.0, 1.0]], 100, n_init=10, seed=1)
    assert abs(study.best[0][0] - 0.3) < 0.05


def test_constant_objective():
    study = run_study(lambda x: 2.5, [[0.0, 1.0], [0.0, 1.0]], 30, n_init=5, seed=0)
    assert study.best_history == [2.5] * 30


def test_failed_trials_recorded():
    def f(x):
        if x[0] < 0.5:
            return float("nan")
        if x[0] < 0.6:
            raise ValueError("solver failed")
        return x[0]
    study = run_study(f, [[0.0, 1.0]], 40, n_init=10, seed=2)
    values = [v for _, v in study.trials]
    assert len(values) == 40
    assert any(v == -math.inf for v in values)
    assert study.best[1] >= 0.6


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_pure_random_matches_oracle(seed, d):
    ranges = np.column_stack([np.arange(d, dtype=float), np.arange(d) + 2.0 ** np.arange(d)])
    study = run_study(lambda x: -np.sum(x ** 2), ranges, 25, n_init=25, seed=seed)
    rng = np.random.default_rng(seed)
    for params, value in study.trials:
        expect = ranges[:, 0] + (ranges[:, 1] - ranges[:, 0]) * rng.random(d)
        assert np.array_equal(params, expect)
        assert value == -np.sum(expect ** 2)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_incumbent_monotone(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=2)
    study = run_study(lambda x: float(np.sin(x @ w)), [[-2, 2], [-2, 2]], 40, n_init=8, seed=seed)
    assert np.all(np.diff(study.best_history) >= 0)


def test_contour_grid_shape_and_values():
    model = logistic_stub([1.0, -2.0, 0.5])
    ranges = np.array([[-1.0, 1.0], [0.0, 2.0], [3.0, 4.0]])
    grid = contour_grid(model, (0, 1), ranges, resolution=50)
    assert grid.values.shape == (50, 50)
    a, b = 7, 31
    point = grid.baseline.copy()
    point[0], point[1] = grid.axis_i[a], grid.axis_j[b]
    assert grid.values[a, b] == model.predict_rows(point[None, :])[0]
    flat = contour_grid(constant_stub(3, 0.4), (0, 2), ranges, resolution=10)
    assert np.all(flat.values == 0.4)


def test_contour_grid_errors():
    model = constant_stub(2, 0.4)
    ranges = np.array([[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        contour_grid(model, (0, 1), ranges, baseline=[2.0, 0.5])
    with pytest.raises(ValueError):
        contour_grid(model, (1, 1), ranges)
    with pytest.raises(ValueError):
        contour_grid(model, (0, 1), ranges, resolution=1)
