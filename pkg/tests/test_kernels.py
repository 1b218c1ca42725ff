import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peeldag.errors import MaxIterations, NotNested, RankDeficient
from peeldag.kernels import (LassoProblem, least_squares, projection_quadratic_form,
                             residual_sum_of_squares, weighted_lasso)


def test_least_squares_mean_fit():
    fit = least_squares(np.ones((4, 1)), np.array([1.0, 2.0, 3.0, 4.0]))
    assert fit.coefficients == pytest.approx([2.5])
    assert fit.rss == pytest.approx(5.0)


def test_least_squares_interpolates():
    fit = least_squares(np.eye(2), np.array([3.0, 4.0]))
    assert fit.coefficients == pytest.approx([3.0, 4.0])
    assert fit.rss == pytest.approx(0.0, abs=1e-20)


def test_least_squares_matches_normal_equations():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 3))
    y = rng.standard_normal(6)
    fit = least_squares(x, y)
    oracle = np.linalg.solve(x.T @ x, x.T @ y)
    np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-8)
    resid = y - x @ fit.coefficients
    assert fit.rss == pytest.approx(resid @ resid, rel=1e-8)


def test_least_squares_rank_deficient():
    x = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(RankDeficient):
        least_squares(x, np.ones(5))
    with pytest.raises(RankDeficient):
        least_squares(np.ones((2, 3)), np.ones(2))


def single_column(n=10, xty_over_n=1.5):
    x = np.ones((n, 1))
    y = np.full(n, xty_over_n)
    return x, y


def test_lasso_soft_threshold_oracle():
    x, y = single_column()
    v = weighted_lasso(LassoProblem(x, y, 0.5, np.ones(1)))
    assert v == pytest.approx([1.0])


def test_lasso_unweighted_is_ols():
    x, y = single_column()
    v = weighted_lasso(LassoProblem(x, y, 0.5, np.zeros(1)))
    assert v == pytest.approx([1.5])


def test_lasso_full_shrinkage():
    x, y = single_column()
    v = weighted_lasso(LassoProblem(x, y, 1.5, np.ones(1)))
    assert v == pytest.approx([0.0])


def test_lasso_validation():
    x, y = single_column()
    with pytest.raises(ValueError):
        LassoProblem(x, y, 0.5, np.array([0.5]))
    with pytest.raises(ValueError):
        LassoProblem(x, y, -1.0, np.ones(1))
    with pytest.raises(ValueError):
        weighted_lasso(LassoProblem(x, y, 0.5, np.ones(1)), tol=0.0)


def test_lasso_iteration_cap():
    rng = np.random.default_rng(0)
    base = rng.standard_normal((30, 1))
    x = np.hstack([base, base + 1e-6 * rng.standard_normal((30, 1))])
    y = base[:, 0] + 0.1 * rng.standard_normal(30)
    with pytest.raises(MaxIterations):
        weighted_lasso(LassoProblem(x, y, 1e-4, np.ones(2)), tol=1e-14, max_sweeps=3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 1.0), st.integers(1, 6))
def test_lasso_kkt_conditions(seed, level, q):
    rng = np.random.default_rng(seed)
    n = 40
    x = rng.standard_normal((n, q))
    y = x @ rng.standard_normal(q) + rng.standard_normal(n)
    w = (rng.random(q) < 0.7).astype(float)
    v = weighted_lasso(LassoProblem(x, y, level, w), tol=1e-12)
    grad = x.T @ (y - x @ v) / n
    for l in range(q):
        if w[l] == 0:
            assert abs(grad[l]) <= 1e-6
        elif v[l] != 0:
            assert abs(grad[l]) == pytest.approx(level, abs=1e-6)
            assert np.sign(grad[l]) == np.sign(v[l])
        else:
            assert abs(grad[l]) <= level + 1e-6


def test_projection_examples():
    z = np.array([[1.0], [0.0]])
    assert projection_quadratic_form(z, [0], [], np.array([1.0, 0.0])) == pytest.approx(1.0)
    rng = np.random.default_rng(1)
    zz = rng.standard_normal((8, 3))
    v = rng.standard_normal(8)
    assert projection_quadratic_form(zz, [0, 2], [0, 2], v) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(NotNested):
        projection_quadratic_form(zz, [0], [1], v)


def dense_projection(z):
    return z @ np.linalg.solve(z.T @ z, z.T)


def test_projection_matches_dense_matrices():
    rng = np.random.default_rng(7)
    z = rng.standard_normal((8, 3))
    v = rng.standard_normal(8)
    oracle = v @ (dense_projection(z) - dense_projection(z[:, [0]])) @ v
    assert projection_quadratic_form(z, [0, 1, 2], [0], v) == pytest.approx(oracle, abs=1e-8)


def test_projection_rank_deficient():
    z = np.ones((5, 2))
    with pytest.raises(RankDeficient):
        projection_quadratic_form(z, [0, 1], [], np.ones(5))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 6))
def test_projection_additivity_and_rss(seed, m):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((20, m))
    v = rng.standard_normal(20)
    full = list(range(m))
    a = full[: m - 1]
    b = full[:1]
    lhs = projection_quadratic_form(z, a, b, v) + projection_quadratic_form(z, full, a, v)
    assert lhs == pytest.approx(projection_quadratic_form(z, full, b, v), abs=1e-8)
    assert projection_quadratic_form(z, full, b, v) >= -1e-9
    rss = least_squares(z[:, a], v).rss
    assert rss == pytest.approx(v @ v - projection_quadratic_form(z, a, [], v), abs=1e-8)
    assert residual_sum_of_squares(z[:, a], v) == pytest.approx(rss, abs=1e-8)
