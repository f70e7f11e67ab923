"""SVR and random forest against brute-force oracles."""

import numpy as np
import pytest

from stockbench.errors import ContractError
from stockbench.forest import RandomForestRegressor, _Tree, best_split
from stockbench.svr import SupportVectorRegressor, rbf_kernel


# -- SVR ------------------------------------------------------------------------


def dual_objective(beta, K, y, eps):
    return -0.5 * beta @ K @ beta + y @ beta - eps * np.abs(beta).sum()


def brute_force_dual(X, y, C, eps, gamma, steps=201, refine=2):
    """Exhaustive grid search over the 3-sample dual box (sum-zero plane),
    then re-gridded around the best cell for extra precision."""
    K = rbf_kernel(X, X, gamma)

    def search(lo1, hi1, lo2, hi2):
        best_w, best_beta = -np.inf, None
        for b1 in np.linspace(lo1, hi1, steps):
            for b2 in np.linspace(lo2, hi2, steps):
                b3 = -(b1 + b2)
                if abs(b3) > C:
                    continue
                beta = np.array([b1, b2, b3])
                w = dual_objective(beta, K, y, eps)
                if w > best_w:
                    best_w, best_beta = w, beta
        return best_w, best_beta

    best_w, beta = search(-C, C, -C, C)
    span = 2.0 * C / (steps - 1)
    for _ in range(refine):
        b1, b2 = beta[0], beta[1]
        best_w, beta = search(
            max(b1 - span, -C), min(b1 + span, C),
            max(b2 - span, -C), min(b2 + span, C),
        )
        span = 2.0 * span / (steps - 1)
    return best_w, beta


def oracle_bias(beta, K, y, eps, C):
    F = K @ beta
    interior = (np.abs(beta) > 1e-9) & (np.abs(beta) < C - 1e-9)
    if interior.any():
        i = int(np.argmax(interior))
        return y[i] - eps * np.sign(beta[i]) - F[i]
    return float(np.mean(y - F))


def test_constant_targets_fit_inside_tube():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(12, 4))
    y = np.full(12, 7.5)
    model = SupportVectorRegressor(C=10.0, epsilon=0.1).fit(X, y)
    assert model.support_vectors_.shape[0] == 0
    assert model.n_iter_ == 0
    np.testing.assert_allclose(model.predict(X), 7.5, atol=0.1)
    np.testing.assert_allclose(model.predict(X), 7.5, atol=1e-12)  # bias lands on center


def test_three_point_dual_matches_grid_search():
    X = np.array([[0.0], [1.0], [2.5]])
    y = np.array([0.0, 1.0, -0.5])
    C, eps, gamma = 1.0, 0.05, 0.5
    best_w, _ = brute_force_dual(X, y, C, eps, gamma)
    model = SupportVectorRegressor(C=C, epsilon=eps, gamma=gamma, tol=1e-8).fit(X, y)
    assert model.dual_objective_ == pytest.approx(best_w, abs=1e-3)
    assert model.dual_objective_ >= best_w - 1e-9  # exact optimum dominates any grid point


def test_three_point_prediction_matches_grid_solution():
    X = np.array([[0.0], [1.0], [2.5]])
    y = np.array([0.0, 1.0, -0.5])
    C, eps, gamma = 1.0, 0.05, 0.5
    _, beta = brute_force_dual(X, y, C, eps, gamma)
    K = rbf_kernel(X, X, gamma)
    b = oracle_bias(beta, K, y, eps, C)
    oracle_pred = K @ beta + b
    model = SupportVectorRegressor(C=C, epsilon=eps, gamma=gamma, tol=1e-8).fit(X, y)
    np.testing.assert_allclose(model.predict(X), oracle_pred, atol=1e-3)


def test_duplicating_rows_leaves_predictions_unchanged():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(15, 3))
    y = np.sin(X.sum(axis=1)) + 0.1 * rng.normal(size=15)
    base = SupportVectorRegressor(C=5.0, epsilon=0.05, gamma=0.7, tol=1e-8).fit(X, y)
    doubled = SupportVectorRegressor(C=5.0, epsilon=0.05, gamma=0.7, tol=1e-8).fit(
        np.vstack([X, X]), np.concatenate([y, y])
    )
    probe = rng.normal(size=(20, 3))
    np.testing.assert_allclose(doubled.predict(probe), base.predict(probe), atol=1e-6)


def test_kkt_conditions_hold_after_fit():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(60, 5))
    y = X[:, 0] * 0.5 + np.sin(X[:, 1]) + 0.05 * rng.normal(size=60)
    model = SupportVectorRegressor(C=10.0, epsilon=0.01).fit(X, y)
    assert model.kkt_violation_ <= model.tol
    # dual coefficients stay inside the box
    assert (np.abs(model.dual_coef_) <= model.C + 1e-12).all()


def test_predictions_finite_on_finite_inputs():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 4)) * 100
    y = rng.normal(size=30) * 100
    model = SupportVectorRegressor(C=10.0, epsilon=0.01).fit(X, y)
    assert np.isfinite(model.predict(X)).all()


def test_svr_feature_width_checked():
    rng = np.random.default_rng(4)
    model = SupportVectorRegressor().fit(rng.normal(size=(10, 3)), rng.normal(size=10))
    with pytest.raises(ContractError, match="columns"):
        model.predict(rng.normal(size=(2, 5)))


def test_svr_needs_two_samples():
    with pytest.raises(ContractError):
        SupportVectorRegressor().fit(np.zeros((1, 2)), np.zeros(1))


# -- random forest ------------------------------------------------------------------


def exhaustive_best_split(X, y, min_leaf):
    """All features, all midpoint thresholds, minimize child SSE."""
    n, d = X.shape
    best = None
    for f in range(d):
        for threshold in np.unique(X[:, f]):
            mask = X[:, f] <= threshold
            nl, nr = mask.sum(), (~mask).sum()
            if nl < min_leaf or nr < min_leaf:
                continue
            sse = ((y[mask] - y[mask].mean()) ** 2).sum() + ((y[~mask] - y[~mask].mean()) ** 2).sum()
            if best is None or sse < best[2] - 1e-12:
                # recompute the midpoint threshold the implementation would use
                left_max = X[mask, f].max()
                right_min = X[~mask, f].min()
                best = (f, 0.5 * (left_max + right_min), sse)
    return best


def test_constant_targets_predict_exactly():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 6))
    y = np.full(40, 3.25)
    model = RandomForestRegressor(n_trees=10, seed=1).fit(X, y)
    np.testing.assert_array_equal(model.predict(X), np.full(40, 3.25))


def test_single_full_tree_memorizes_training_targets():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(25, 4))
    y = rng.normal(size=25)
    model = RandomForestRegressor(
        n_trees=1, max_depth=None, min_leaf=1, max_features=None, bootstrap=False, seed=0
    ).fit(X, y)
    np.testing.assert_allclose(model.predict(X), y, atol=1e-12)


def test_depth_two_splits_match_exhaustive_search():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(20, 3))
    y = X[:, 1] * 2.0 + rng.normal(scale=0.1, size=20)
    model = RandomForestRegressor(
        n_trees=1, max_depth=2, min_leaf=2, max_features=None, bootstrap=False, seed=0
    ).fit(X, y)
    tree = model.trees_[0]

    root = exhaustive_best_split(X, y, 2)
    assert tree.feature[0] == root[0]
    assert tree.threshold[0] == pytest.approx(root[1], abs=1e-12)

    mask = X[:, root[0]] <= root[1]
    for child_node, child_mask in ((tree.left[0], mask), (tree.right[0], ~mask)):
        expected = exhaustive_best_split(X[child_mask], y[child_mask], 2)
        if expected is None:
            assert tree.feature[child_node] == -1
        else:
            assert tree.feature[child_node] == expected[0]
            assert tree.threshold[child_node] == pytest.approx(expected[1], abs=1e-12)


def test_best_split_agrees_with_exhaustive_search_on_random_data():
    rng = np.random.default_rng(8)
    for _ in range(25):
        X = rng.normal(size=(rng.integers(6, 30), rng.integers(1, 5)))
        y = rng.normal(size=X.shape[0])
        ours = best_split(X, y, np.arange(X.shape[1]), 2)
        oracle = exhaustive_best_split(X, y, 2)
        if oracle is None:
            assert ours is None
        else:
            n = y.shape[0]
            parent_sse = ((y - y.mean()) ** 2).sum()
            assert ours is not None
            assert parent_sse - ours[2] == pytest.approx(oracle[2], abs=1e-9)


def test_predictions_bounded_by_training_targets():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(80, 5))
    y = rng.normal(size=80) * 10
    model = RandomForestRegressor(n_trees=20, seed=2).fit(X, y)
    preds = model.predict(rng.normal(size=(200, 5)) * 3)
    assert (preds >= y.min() - 1e-12).all()
    assert (preds <= y.max() + 1e-12).all()


def test_forest_deterministic_under_seed():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(50, 4))
    y = rng.normal(size=50)
    probe = rng.normal(size=(30, 4))
    a = RandomForestRegressor(n_trees=15, seed=7).fit(X, y).predict(probe)
    b = RandomForestRegressor(n_trees=15, seed=7).fit(X, y).predict(probe)
    assert a.tobytes() == b.tobytes()
    c = RandomForestRegressor(n_trees=15, seed=8).fit(X, y).predict(probe)
    assert a.tobytes() != c.tobytes()


def test_min_leaf_respected():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    model = RandomForestRegressor(
        n_trees=1, max_depth=None, min_leaf=5, max_features=None, bootstrap=False, seed=0
    ).fit(X, y)
    tree = model.trees_[0]

    def leaf_sizes(node, rows):
        if tree.feature[node] < 0:
            return [len(rows)]
        mask = X[rows, tree.feature[node]] <= tree.threshold[node]
        return leaf_sizes(tree.left[node], rows[mask]) + leaf_sizes(
            tree.right[node], rows[~mask]
        )

    assert min(leaf_sizes(0, np.arange(30))) >= 5


def test_empty_prediction_matrix_gives_empty_vector():
    rng = np.random.default_rng(12)
    model = RandomForestRegressor(n_trees=3, seed=0).fit(
        rng.normal(size=(20, 4)), rng.normal(size=20)
    )
    assert model.predict(np.zeros((0, 4))).shape == (0,)
    svr = SupportVectorRegressor().fit(rng.normal(size=(10, 4)), rng.normal(size=10))
    assert svr.predict(np.zeros((0, 4))).shape == (0,)
