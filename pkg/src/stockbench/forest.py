"""Random forest regression: bagged variance-reduction trees with random
feature subsets at each split."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ContractError
from .validation import as_float_matrix, as_float_vector


@dataclass
class _Tree:
    """Flat-array binary regression tree. ``feature[i] == -1`` marks a leaf
    whose prediction is ``value[i]``."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        for r in range(X.shape[0]):
            node = 0
            while self.feature[node] >= 0:
                if X[r, self.feature[node]] <= self.threshold[node]:
                    node = self.left[node]
                else:
                    node = self.right[node]
            out[r] = self.value[node]
        return out


def best_split(X, y, feature_ids, min_leaf):
    """Exhaustive best split over the given features by sum-of-squares
    reduction. Returns (feature, threshold, gain) or None when no split
    leaves both sides with >= min_leaf samples."""
    n = y.shape[0]
    total = y.sum()
    total_sq = (y * y).sum()
    parent_sse = total_sq - total * total / n
    best = None
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csum_sq = np.cumsum(ys * ys)
        for cut in range(min_leaf, n - min_leaf + 1):
            if cut < min_leaf or n - cut < min_leaf:
                continue
            if xs[cut - 1] == xs[cut]:
                continue  # threshold would not separate the points
            left_sum, left_sq = csum[cut - 1], csum_sq[cut - 1]
            right_sum, right_sq = total - left_sum, total_sq - left_sq
            sse = (left_sq - left_sum * left_sum / cut) + (
                right_sq - right_sum * right_sum / (n - cut)
            )
            gain = parent_sse - sse
            if best is None or gain > best[2] + 1e-12:
                threshold = 0.5 * (xs[cut - 1] + xs[cut])
                best = (f, threshold, gain)
    if best is None or best[2] <= 1e-12:
        return None
    return best


class RandomForestRegressor(BaseEstimator, RegressorMixin):
    """Average of ``n_trees`` regression trees, each grown on a bootstrap
    sample with a random feature subset per split.

    ``max_features="sqrt"`` considers floor(sqrt(n_features)) features per
    split; None considers all. ``max_depth=None`` grows until leaves are
    pure or smaller than 2 * min_leaf.
    """

    def __init__(
        self,
        n_trees=100,
        max_depth=10,
        min_leaf=2,
        max_features="sqrt",
        bootstrap=True,
        seed=0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def _n_split_features(self, d: int) -> int:
        if self.max_features is None:
            return d
        if self.max_features == "sqrt":
            return max(1, int(np.sqrt(d)))
        return max(1, min(int(self.max_features), d))

    def fit(self, X, y):
        X = as_float_matrix(X, "X")
        y = as_float_vector(y, "y")
        if X.shape[0] != y.shape[0]:
            raise ContractError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < max(1, self.min_leaf):
            raise ContractError(
                f"need at least min_leaf={self.min_leaf} samples, got {X.shape[0]}"
            )
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ContractError("n_trees and min_leaf must be >= 1")
        n, d = X.shape
        seeds = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        self.trees_ = []
        for seq in seeds:
            rng = np.random.default_rng(seq)
            if self.bootstrap:
                idx = rng.integers(0, n, size=n)
            else:
                idx = np.arange(n)
            tree = _Tree()
            self._grow(tree, tree.add_node(), X[idx], y[idx], 0, rng, d)
            self.trees_.append(tree)
        self.n_features_in_ = d
        self.y_range_ = (float(y.min()), float(y.max()))
        return self

    def _grow(self, tree, node, X, y, depth, rng, d):
        tree.value[node] = float(y.mean())
        if self.max_depth is not None and depth >= self.max_depth:
            return
        if y.shape[0] < 2 * self.min_leaf or np.all(y == y[0]):
            return
        k = self._n_split_features(d)
        features = rng.choice(d, size=k, replace=False) if k < d else np.arange(d)
        split = best_split(X, y, np.sort(features), self.min_leaf)
        if split is None:
            return
        f, threshold, _ = split
        mask = X[:, f] <= threshold
        tree.feature[node] = int(f)
        tree.threshold[node] = float(threshold)
        tree.left[node] = tree.add_node()
        self._grow(tree, tree.left[node], X[mask], y[mask], depth + 1, rng, d)
        tree.right[node] = tree.add_node()
        self._grow(tree, tree.right[node], X[~mask], y[~mask], depth + 1, rng, d)

    def predict(self, X):
        X = as_float_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ContractError(
                f"X has {X.shape[1]} columns, model was fit with {self.n_features_in_}"
            )
        if X.shape[0] == 0:
            return np.zeros(0)
        out = np.zeros(X.shape[0])
        for tree in self.trees_:
            out += tree.predict(X)
        return out / len(self.trees_)
