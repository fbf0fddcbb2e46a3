import numpy as np
import pytest

from hedonic_fusion import linear_models as lm
from hedonic_fusion.core_types import DesignMatrix


def _dm(X, y, clusters=None, standardization=None):
    n = len(y)
    return DesignMatrix(
        np.asarray(X, dtype=float),
        tuple(f"x{i}" for i in range(np.asarray(X).shape[1])),
        np.asarray(y, dtype=float),
        tuple(f"h{i}" for i in range(n)),
        tuple(clusters) if clusters is not None else ("c",) * n,
        standardization,
    )


def _ols_oracle(X, y):
    """Independent route: explicit normal equations with an intercept column."""
    A = np.column_stack([np.ones(len(y)), X])
    return np.linalg.inv(A.T @ A) @ (A.T @ y)


# ---------------------------------------------------------------- fit_ols


def test_ols_exact_line():
    x = np.arange(8.0)
    fit = lm.fit_ols(_dm(x[:, None], 2.0 * x + 3.0))
    assert abs(fit.intercept - 3.0) < 1e-10
    assert abs(fit.coefficients[0] - 2.0) < 1e-10


def test_ols_constant_target(rng):
    fit = lm.fit_ols(_dm(rng.normal(size=(20, 3)), np.full(20, 5.0)))
    assert abs(fit.intercept - 5.0) < 1e-10
    assert np.abs(fit.coefficients).max() < 1e-10


def test_ols_matches_normal_equations(rng):
    X = rng.normal(size=(50, 5))
    y = X @ rng.normal(size=5) + rng.normal(size=50)
    fit = lm.fit_ols(_dm(X, y))
    oracle = _ols_oracle(X, y)
    got = np.concatenate([[fit.intercept], fit.coefficients])
    assert np.abs(got - oracle).max() / np.abs(oracle).max() < 1e-8


def test_ols_residual_orthogonality(rng):
    X = rng.normal(size=(40, 4))
    y = rng.normal(size=40) * 2.0 + 14.0
    dm = _dm(X, y)
    fit = lm.fit_ols(dm)
    e = y - lm.predict(fit, X)
    A = np.column_stack([np.ones(40), X])
    assert np.abs(A.T @ e).max() < 1e-8 * 40 * y.std()


def test_ols_rank_deficiency_names_columns(rng):
    X = rng.normal(size=(30, 3))
    X[:, 2] = X[:, 0] + X[:, 1]
    with pytest.raises(lm.RankDeficiencyError) as err:
        lm.fit_ols(_dm(X, rng.normal(size=30)))
    assert set(err.value.columns) & {"x0", "x1", "x2"}


def test_ols_needs_enough_rows(rng):
    with pytest.raises(ValueError, match="n > p"):
        lm.fit_ols(_dm(rng.normal(size=(4, 4)), rng.normal(size=4)))


def test_ols_row_permutation_invariance(rng):
    X = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    fit = lm.fit_ols(_dm(X, y))
    perm = rng.permutation(30)
    fit_p = lm.fit_ols(_dm(X[perm], y[perm]))
    assert np.abs(fit.coefficients - fit_p.coefficients).max() < 1e-10
    assert abs(fit.intercept - fit_p.intercept) < 1e-10


def test_ols_in_sample_never_worse_than_mean(rng):
    X = rng.normal(size=(60, 5))
    y = rng.normal(size=60)
    fit = lm.fit_ols(_dm(X, y))
    mse = np.mean((y - lm.predict(fit, X)) ** 2)
    assert mse <= y.var() + 1e-12


# ---------------------------------------------------------------- fit_lasso


def _standardized(rng, n, p, y=None):
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n) if y is None else y
    return _dm(X, y).standardized()


def test_lasso_zero_penalty_equals_ols(rng):
    dm = _standardized(rng, 60, 5)
    lasso = lm.fit_lasso(dm, 0.0)
    ols = lm.fit_ols(dm)
    assert np.abs(lasso.coefficients - ols.coefficients).max() < 1e-6
    assert abs(lasso.intercept - ols.intercept) < 1e-6


def test_lasso_all_zero_at_lambda_max(rng):
    dm = _standardized(rng, 50, 6)
    for lam in (lm.lambda_max(dm), 2 * lm.lambda_max(dm)):
        fit = lm.fit_lasso(dm, lam)
        assert fit.nonzero_count() == 0
        assert np.all(fit.coefficients == 0.0)


def _orthonormal_dm(rng, n=64, p=8):
    # columns centered, mutually orthogonal, X'X = n*I
    M = rng.normal(size=(n, p))
    M -= M.mean(axis=0)
    Q, _ = np.linalg.qr(M)
    X = Q * np.sqrt(n)
    y = X @ np.linspace(-1.5, 2.0, p) + rng.normal(size=n)
    return _dm(X, y, standardization=(np.zeros(p), np.ones(p)))


def test_lasso_orthonormal_soft_threshold_closed_form(rng):
    dm = _orthonormal_dm(rng)
    yc = dm.y - dm.y.mean()
    ols_coef = dm.X.T @ yc / dm.n
    for lam in (0.05, 0.2, 0.8):
        fit = lm.fit_lasso(dm, lam)
        oracle = np.sign(ols_coef) * np.maximum(np.abs(ols_coef) - lam, 0.0)
        assert np.abs(fit.coefficients - oracle).max() < 1e-8


def test_lasso_requires_standardized(rng):
    with pytest.raises(ValueError, match="standardized"):
        lm.fit_lasso(_dm(rng.normal(size=(20, 3)), rng.normal(size=20)), 0.1)


def test_lasso_objective_non_increasing(rng):
    X = rng.normal(size=(80, 10))
    X[:, 1] = X[:, 0] + 0.05 * X[:, 1]  # correlated pair
    y = X @ rng.normal(size=10) + rng.normal(size=80)
    fit = lm.fit_lasso(_dm(X, y).standardized(), 0.02)
    assert np.all(np.diff(fit.history) <= 1e-12)


def test_lasso_sparsity_extremes(rng):
    dm = _standardized(rng, 50, 8, y=None)
    assert lm.fit_lasso(dm, lm.lambda_max(dm)).nonzero_count() == 0
    dense = lm.fit_lasso(dm, 0.0)
    assert dense.nonzero_count() <= dm.p


def test_lasso_convergence_error_carries_iterate(rng):
    X = rng.normal(size=(40, 6))
    X[:, 1] = X[:, 0] + 1e-9 * X[:, 1]
    dm = _dm(X, X @ np.ones(6) + rng.normal(size=40)).standardized()
    with pytest.raises(lm.ConvergenceError) as err:
        lm.fit_lasso(dm, 1e-6, max_cycles=2)
    assert err.value.cycles == 2
    assert err.value.fit.coefficients.shape == (6,)


def test_lasso_row_permutation_invariance(rng):
    X = rng.normal(size=(50, 5))
    y = X @ np.array([1.0, 0.0, -2.0, 0.0, 0.5]) + rng.normal(size=50)
    fit = lm.fit_lasso(_dm(X, y).standardized(), 0.05)
    perm = rng.permutation(50)
    fit_p = lm.fit_lasso(_dm(X[perm], y[perm]).standardized(), 0.05)
    assert np.abs(fit.coefficients - fit_p.coefficients).max() < 1e-10


# ---------------------------------------------------------------- predict


def test_predict_reproduces_exact_fit():
    x = np.arange(10.0)
    dm = _dm(x[:, None], 3.0 * x - 1.0)
    fit = lm.fit_ols(dm)
    assert np.abs(lm.predict(fit, dm.X) - dm.y).max() < 1e-10


def test_predict_zero_coefficients_gives_intercept():
    fit = lm.LinearFit(4.5, np.zeros(3), 0.1, ("a", "b", "c"))
    out = lm.predict(fit, np.arange(6.0).reshape(2, 3))
    assert np.all(out == 4.5)


def test_predict_hand_computed_rows():
    # alpha=1.5, beta=(2, -1); rows worked out by hand
    fit = lm.LinearFit(1.5, np.array([2.0, -1.0]), 0.0, ("a", "b"))
    rows = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 3.0]])
    np.testing.assert_allclose(lm.predict(fit, rows), [3.5, 0.5, 2.5])


def test_predict_applies_standardization():
    # standardized fit: x_std = (x - 10) / 2, yhat = 1 + 3 * x_std
    fit = lm.LinearFit(
        1.0, np.array([3.0]), 0.0, ("a",), (np.array([10.0]), np.array([2.0]))
    )
    np.testing.assert_allclose(lm.predict(fit, [[12.0]]), [4.0])


def test_predict_width_mismatch():
    fit = lm.LinearFit(0.0, np.zeros(2), 0.0, ("a", "b"))
    with pytest.raises(ValueError, match="columns"):
        lm.predict(fit, np.zeros((3, 5)))


# ------------------------------------------------------------ select_lambda


def test_select_lambda_pure_noise_picks_top_of_grid(rng):
    dm = _standardized(np.random.default_rng(123), 120, 10)
    lam = lm.select_lambda(dm, grid_size=20, k=4, seed=5)
    assert lam == lm.lambda_grid(dm, 20)[0]


def test_select_lambda_planted_signal(rng):
    n = 400
    X = rng.normal(size=(n, 6))
    y = 3.0 * X[:, 2] + 0.3 * rng.normal(size=n)
    dm = _dm(X, y).standardized()
    grid = lm.lambda_grid(dm, 30)
    lam = lm.select_lambda(dm, grid_size=30, k=4, seed=1)
    assert lam < grid[len(grid) // 2]  # lower half of the grid
    fit = lm.fit_lasso(dm, lam)
    assert fit.coefficients[2] != 0.0


def test_select_lambda_two_point_grid(rng):
    dm = _standardized(rng, 60, 4)
    lam = lm.select_lambda(dm, grid_size=2, k=3, seed=0)
    assert lam in set(lm.lambda_grid(dm, 2))


def test_select_lambda_constant_target(rng):
    X = rng.normal(size=(30, 3))
    dm = _dm(X, np.full(30, 2.0)).standardized()
    assert lm.select_lambda(dm, grid_size=5, k=3, seed=0) == 0.0


def test_lambda_grid_shape(rng):
    dm = _standardized(rng, 40, 4)
    grid = lm.lambda_grid(dm, 100)
    assert grid.size == 100
    assert grid[0] == lm.lambda_max(dm)
    assert np.isclose(grid[-1], grid[0] * 1e-4)
    assert np.all(np.diff(grid) < 0)


# --------------------------------------------------------- cluster_robust_se


def _hc1_oracle(X, y, fit):
    """Heteroskedasticity-robust SEs: per-observation meat, n/(n-k) factor."""
    n = len(y)
    A = np.column_stack([np.ones(n), X])
    k = A.shape[1]
    e = y - A @ np.concatenate([[fit.intercept], fit.coefficients])
    bread = np.linalg.inv(A.T @ A)
    meat = A.T @ (A * (e**2)[:, None])
    V = (n / (n - k)) * bread @ meat @ bread
    return np.sqrt(np.diag(V))


def test_singleton_clusters_reproduce_hc1(rng):
    n = 120
    X = rng.normal(size=(n, 3))
    y = X @ np.array([1.0, -0.5, 0.2]) + rng.normal(size=n) * (1 + 0.5 * np.abs(X[:, 0]))
    dm = _dm(X, y, clusters=[f"g{i}" for i in range(n)])
    fit = lm.fit_ols(dm)
    se = lm.cluster_robust_se(dm, fit)
    np.testing.assert_allclose(se, _hc1_oracle(X, y, fit), atol=1e-10)


def test_clustered_close_to_classical_under_homoskedasticity():
    rng = np.random.default_rng(2024)
    n, k_clusters = 2000, 50
    X = rng.normal(size=(n, 2))
    y = X @ np.array([1.0, 2.0]) + rng.normal(size=n)
    clusters = [f"g{i % k_clusters}" for i in range(n)]
    dm = _dm(X, y, clusters=clusters)
    fit = lm.fit_ols(dm)
    se = lm.cluster_robust_se(dm, fit)
    A = np.column_stack([np.ones(n), X])
    e = y - A @ np.concatenate([[fit.intercept], fit.coefficients])
    s2 = e @ e / (n - 3)
    classical = np.sqrt(np.diag(s2 * np.linalg.inv(A.T @ A)))
    assert np.all(np.abs(se / classical - 1.0) < 0.25)


def test_two_clusters_finite(rng):
    n = 40
    X = rng.normal(size=(n, 2))
    y = rng.normal(size=n)
    dm = _dm(X, y, clusters=["a"] * 20 + ["b"] * 20)
    se = lm.cluster_robust_se(dm, lm.fit_ols(dm))
    assert np.all(np.isfinite(se)) and np.all(se > 0)


def test_single_cluster_rejected(rng):
    dm = _dm(rng.normal(size=(20, 2)), rng.normal(size=20), clusters=["a"] * 20)
    with pytest.raises(ValueError, match="2 clusters"):
        lm.cluster_robust_se(dm, lm.fit_ols(dm))


# ------------------------------------------------------------- serialization


def test_linear_fit_json_roundtrip(rng):
    dm = _standardized(rng, 30, 3)
    fit = lm.fit_lasso(dm, 0.01)
    again = lm.LinearFit.from_json(fit.to_json())
    assert again.intercept == fit.intercept
    assert again.lam == fit.lam
    assert again.column_names == fit.column_names
    np.testing.assert_array_equal(again.coefficients, fit.coefficients)
    np.testing.assert_array_equal(again.standardization[0], fit.standardization[0])
    np.testing.assert_array_equal(again.standardization[1], fit.standardization[1])
