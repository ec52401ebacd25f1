import numpy as np
import pytest

from oracles import mv_grid_refine, mv_objective, project_simplex_bisection, simplex_grid

from hindsight_attrib.errors import DimensionMismatch, NonFiniteInput
from hindsight_attrib.market_data import price_relatives, sample_covariance
from hindsight_attrib.mean_variance import (
    MVProblem,
    equal_weights,
    hindsight_weights,
    project_simplex,
    solve,
)
from hindsight_attrib.synthetic import ohlcv_panel


def random_problem(rng, n):
    mu = rng.normal(1.0, 0.05, n)
    a = rng.normal(0, 0.05, (n, n))
    sigma = a @ a.T + 1e-4 * np.eye(n)
    return MVProblem(mu=mu, sigma=sigma, lam=0.5)


def test_projection_matches_bisection_oracle():
    rng = np.random.default_rng(200)
    for _ in range(1000):
        v = rng.normal(0, 3, 5)
        got = project_simplex(v)
        want = project_simplex_bisection(v)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-8)
        assert got.min() >= 0.0
        assert abs(got.sum() - 1.0) <= 1e-9


def test_projection_is_exactly_idempotent():
    rng = np.random.default_rng(201)
    for _ in range(200):
        w = project_simplex(rng.normal(0, 2, 6))
        again = project_simplex(w)
        assert np.array_equal(again, w)


def test_projection_input_guards():
    with pytest.raises(NonFiniteInput):
        project_simplex(np.array([0.5, np.nan]))
    with pytest.raises(NonFiniteInput):
        project_simplex(np.array([np.inf, 0.0]))
    with pytest.raises(DimensionMismatch):
        project_simplex(np.ones((2, 2)))
    with pytest.raises(DimensionMismatch):
        project_simplex(np.array([]))


def test_problem_validation():
    with pytest.raises(DimensionMismatch):
        MVProblem(mu=np.ones(3), sigma=np.eye(2))
    with pytest.raises(NonFiniteInput):
        MVProblem(mu=np.array([1.0, np.nan]), sigma=np.eye(2))


def test_solver_matches_grid_refined_oracle():
    grid = simplex_grid(4, 0.01)
    rng = np.random.default_rng(202)
    for _ in range(50):
        prob = random_problem(rng, 4)
        res = solve(prob)
        assert res.converged
        _, best = mv_grid_refine(prob.mu, prob.sigma, prob.lam, grid)
        # objectives agree even when the argmax is not unique
        assert res.objective >= best - 1e-6
        assert abs(res.objective - best) <= 1e-6


def test_solver_result_sits_on_simplex():
    rng = np.random.default_rng(203)
    for _ in range(100):
        prob = random_problem(rng, int(rng.integers(2, 9)))
        res = solve(prob)
        w = res.weights
        assert w.min() >= 0.0
        assert abs(w.sum() - 1.0) <= 1e-9
        assert res.objective == mv_objective(w, prob.mu, prob.sigma, prob.lam)


def test_single_dominant_asset_takes_all_weight():
    mu = np.array([1.0, 1.0, 2.0])
    prob = MVProblem(mu=mu, sigma=1e-6 * np.eye(3), lam=0.5)
    res = solve(prob)
    np.testing.assert_allclose(res.weights, [0.0, 0.0, 1.0], atol=1e-6)


def test_zero_risk_aversion_limit_is_corner():
    rng = np.random.default_rng(204)
    mu = rng.normal(1.0, 0.1, 5)
    prob = MVProblem(mu=mu, sigma=np.eye(5), lam=1e-12)
    res = solve(prob)
    assert res.weights[np.argmax(mu)] == pytest.approx(1.0, abs=1e-6)


def test_identical_assets_keep_equal_weights():
    prob = MVProblem(mu=np.full(4, 1.01), sigma=0.02 * np.eye(4), lam=0.5)
    res = solve(prob)
    np.testing.assert_allclose(res.weights, equal_weights(4), atol=1e-8)


def test_hindsight_weights_composition():
    panel = ohlcv_panel(5, 60, seed=15)
    t, window = 40, 10
    res = hindsight_weights(panel, t, window, lam=0.5)
    mu = price_relatives(panel, t).values
    cov = sample_covariance(panel, t, window, include_current=True)
    direct = solve(MVProblem(mu=mu, sigma=cov.matrix, lam=0.5))
    np.testing.assert_array_equal(res.weights, direct.weights)
    assert res.objective == direct.objective
