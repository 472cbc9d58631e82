"""Random-forest classifier built on Gini-impurity greedy splits.

Grown from scratch so training is bit-reproducible: per-tree bootstrap and
feature sampling derive from the run seed, split search scans midpoints of
sorted unique values, and impurity ties break on the lowest feature index
then the lowest threshold. Rows with value < threshold go left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import STREAM_TREE, derive_rng


def gini(labels) -> float:
    """Gini impurity 1 - p0^2 - p1^2 of 0/1 labels."""
    arr = np.asarray(labels, dtype=float)
    if arr.size == 0:
        raise ValueError("gini of empty label set")
    p1 = arr.mean()
    p0 = 1.0 - p1
    return float(1.0 - p0 * p0 - p1 * p1)


def _gini_from_counts(n1: np.ndarray, n: np.ndarray) -> np.ndarray:
    p1 = n1 / n
    p0 = 1.0 - p1
    return 1.0 - p0 * p0 - p1 * p1


@dataclass
class DecisionTree:
    """Flat-array binary tree; ``feature[i] < 0`` marks node i as a leaf."""

    feature: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    threshold: np.ndarray = field(default_factory=lambda: np.empty(0))
    left: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    right: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    n_samples: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    impurity: np.ndarray = field(default_factory=lambda: np.empty(0))
    prob1: np.ndarray = field(default_factory=lambda: np.empty(0))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Class-1 probability of each row's leaf."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return self.prob1[node]
            rows = np.nonzero(active)[0]
            goes_left = X[rows, feat[rows]] < self.threshold[node[rows]]
            node[rows] = np.where(
                goes_left, self.left[node[rows]], self.right[node[rows]]
            )

    def feature_importances(self, n_features: int) -> np.ndarray:
        """Raw mean-decrease-in-Gini per feature, weighted by node counts."""
        imp = np.zeros(n_features)
        total = float(self.n_samples[0]) if self.n_samples.size else 1.0
        for i in range(self.feature.size):
            f = self.feature[i]
            if f < 0:
                continue
            l, r = self.left[i], self.right[i]
            decrease = (
                self.n_samples[i] * self.impurity[i]
                - self.n_samples[l] * self.impurity[l]
                - self.n_samples[r] * self.impurity[r]
            ) / total
            imp[f] += decrease
        return imp


def _best_split(
    X: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int
) -> tuple[int, float] | None:
    """Lowest weighted child Gini over candidate features and thresholds.

    Features are scanned in ascending index order and only strictly better
    splits replace the incumbent, so ties resolve to the lowest feature
    index; within a feature, the first (lowest) threshold wins.
    """
    n = y.size
    best_score = math.inf
    best: tuple[int, float] | None = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        boundary = xs[1:] != xs[:-1]
        if not boundary.any():
            continue
        n_left = np.arange(1, n)
        n_right = n - n_left
        ok = boundary & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        ones_left = np.cumsum(ys)[:-1]
        ones_right = ys.sum() - ones_left
        weighted = (
            n_left * _gini_from_counts(ones_left, n_left)
            + n_right * _gini_from_counts(ones_right, n_right)
        ) / n
        weighted = np.where(ok, weighted, math.inf)
        j = int(np.argmin(weighted))
        if weighted[j] < best_score:
            best_score = float(weighted[j])
            best = (int(f), float((xs[j] + xs[j + 1]) / 2.0))
    return best


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_depth: int,
    min_leaf: int,
    max_features: int,
) -> DecisionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    n_samples: list[int] = []
    impurity: list[float] = []
    prob1: list[float] = []

    d = X.shape[1]
    mf = min(max_features, d)

    def new_node(idx: np.ndarray) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        n_samples.append(idx.size)
        impurity.append(gini(y[idx]))
        prob1.append(float(y[idx].mean()))
        return node

    # Depth-first growth with an explicit stack keeps node numbering (and
    # hence the rng consumption order) deterministic.
    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or impurity[node] == 0.0 or idx.size < 2 * min_leaf:
            continue
        sampled = np.sort(rng.choice(d, size=mf, replace=False))
        split = _best_split(X[idx], y[idx], sampled, min_leaf)
        if split is None:
            continue
        f, thr = split
        goes_left = X[idx, f] < thr
        feature[node] = f
        threshold[node] = thr
        left_child = new_node(idx[goes_left])
        right_child = new_node(idx[~goes_left])
        left[node] = left_child
        right[node] = right_child
        stack.append((right_child, idx[~goes_left], depth + 1))
        stack.append((left_child, idx[goes_left], depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        n_samples=np.asarray(n_samples, dtype=np.int64),
        impurity=np.asarray(impurity),
        prob1=np.asarray(prob1),
    )


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    n_features: int

    @classmethod
    def fit(
        cls,
        X: np.ndarray,
        y: np.ndarray,
        seed: int,
        n_trees: int,
        max_depth: int,
        min_leaf: int,
        max_features: int | None,
        bootstrap: bool = True,
    ) -> "RandomForest":
        n, d = X.shape
        mf = max_features if max_features is not None else math.ceil(math.sqrt(d))
        trees = []
        for t in range(n_trees):
            rng = derive_rng(seed, STREAM_TREE, t)
            if bootstrap:
                idx = rng.integers(0, n, size=n)
            else:
                idx = np.arange(n)
            trees.append(grow_tree(X[idx], y[idx], rng, max_depth, min_leaf, mf))
        return cls(trees=trees, n_features=d)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean class-1 leaf probability across trees."""
        if X.shape[0] == 0:
            return np.empty(0)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict_proba(X)
        return acc / len(self.trees)

    def feature_importances(self) -> np.ndarray:
        acc = np.zeros(self.n_features)
        for tree in self.trees:
            acc += tree.feature_importances(self.n_features)
        return acc / len(self.trees)
