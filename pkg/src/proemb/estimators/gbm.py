"""Squared-error gradient boosting with exact greedy regression trees.

Each feature column is sorted once per fit; trees grow level by level and
every level scans each presorted column a single time, accumulating left
statistics for all open nodes at once.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MIN_GAIN = 1e-12


@njit(cache=True)
def _grow_tree(XT, orderT, start, r, max_depth, min_leaf):
    p, n = XT.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    value = np.zeros(max_nodes)
    node_sum = np.zeros(max_nodes)
    node_cnt = np.zeros(max_nodes, dtype=np.int64)

    node_of = np.zeros(n, dtype=np.int64)
    for i in range(n):
        node_sum[0] += r[i]
    node_cnt[0] = n
    n_nodes = 1
    level_start, level_end = 0, 1

    for depth in range(max_depth):
        best_gain = np.zeros(max_nodes)
        best_feat = np.full(max_nodes, -1, dtype=np.int64)
        best_thr = np.zeros(max_nodes)
        acc_sum = np.zeros(max_nodes)
        acc_cnt = np.zeros(max_nodes, dtype=np.int64)
        last_val = np.zeros(max_nodes)
        for f in range(p):
            # rows tied at the column minimum cannot be split apart; their
            # per-node totals are the node totals minus the tail totals
            s0 = start[f]
            for k in range(level_start, level_end):
                acc_sum[k] = 0.0
                acc_cnt[k] = 0
            for t in range(s0, n):
                i = orderT[f, t]
                k = node_of[i]
                if k >= level_start:
                    acc_sum[k] += r[i]
                    acc_cnt[k] += 1
            x0 = XT[f, orderT[f, 0]]
            for k in range(level_start, level_end):
                acc_sum[k] = node_sum[k] - acc_sum[k]
                acc_cnt[k] = node_cnt[k] - acc_cnt[k]
                last_val[k] = x0
            for t in range(s0, n):
                i = orderT[f, t]
                k = node_of[i]
                if k < level_start:
                    continue
                x = XT[f, i]
                c = acc_cnt[k]
                if c >= min_leaf and x > last_val[k] and node_cnt[k] - c >= min_leaf:
                    sl = acc_sum[k]
                    sr = node_sum[k] - sl
                    nr = node_cnt[k] - c
                    gain = sl * sl / c + sr * sr / nr - node_sum[k] * node_sum[k] / node_cnt[k]
                    if gain > best_gain[k] + MIN_GAIN:
                        best_gain[k] = gain
                        best_feat[k] = f
                        thr = 0.5 * (last_val[k] + x)
                        if thr >= x:
                            thr = last_val[k]
                        best_thr[k] = thr
                acc_sum[k] += r[i]
                acc_cnt[k] = c + 1
                last_val[k] = x
        new_start = n_nodes
        for k in range(level_start, level_end):
            if best_feat[k] >= 0:
                feature[k] = best_feat[k]
                threshold[k] = best_thr[k]
                left[k] = n_nodes
                right[k] = n_nodes + 1
                n_nodes += 2
        if n_nodes == new_start:
            break
        for i in range(n):
            k = node_of[i]
            if k >= level_start and feature[k] >= 0:
                child = left[k] if XT[feature[k], i] <= threshold[k] else right[k]
                node_of[i] = child
                node_sum[child] += r[i]
                node_cnt[child] += 1
        level_start, level_end = new_start, n_nodes

    for k in range(n_nodes):
        if node_cnt[k] > 0:
            value[k] = node_sum[k] / node_cnt[k]
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes], node_of


@njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out


class RegressionTree:
    def __init__(self, feature, threshold, left, right, value):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value

    @property
    def depth(self) -> int:
        def walk(k):
            if self.feature[k] < 0:
                return 0
            return 1 + max(walk(self.left[k]), walk(self.right[k]))
        return walk(0)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)


def _presort(X):
    XT = np.ascontiguousarray(np.asarray(X, dtype=float).T)
    orderT = np.argsort(XT, axis=1, kind="stable")
    sorted_vals = np.take_along_axis(XT, orderT, axis=1)
    start = (sorted_vals == sorted_vals[:, :1]).sum(axis=1).astype(np.int64)
    return XT, orderT, start


def fit_tree(X, y, max_depth: int = 3, min_samples_leaf: int = 1) -> RegressionTree:
    """A single least-squares regression tree with exact greedy splits."""
    XT, orderT, start = _presort(X)
    tree = _grow_tree(XT, orderT, start, np.asarray(y, dtype=float), max_depth, min_samples_leaf)
    return RegressionTree(*tree[:5])


class GradientBoostedTrees:
    """Least-squares boosting: start at the mean, fit each tree to the residuals.

    :param n_trees: Number of boosting rounds.
    :param max_depth: Depth of every tree.
    :param shrinkage: Learning rate applied to each tree's contribution.
    :param min_samples_leaf: Minimum rows per leaf.
    """

    def __init__(self, n_trees: int = 100, max_depth: int = 3, shrinkage: float = 0.1,
                 min_samples_leaf: int = 1):
        if n_trees < 1 or max_depth < 1:
            raise ValueError("need n_trees >= 1 and max_depth >= 1")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.shrinkage = shrinkage
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise ValueError(f"X of shape {X.shape} does not match y of length {y.shape[0]}")
        XT, orderT, start = _presort(X)
        self.init_ = float(y.mean())
        F = np.full(y.shape[0], self.init_)
        self.trees_ = []
        self.train_loss_ = []
        for _ in range(self.n_trees):
            feat, thr, lft, rgt, val, leaf_of = _grow_tree(
                XT, orderT, start, y - F, self.max_depth, self.min_samples_leaf
            )
            self.trees_.append(RegressionTree(feat, thr, lft, rgt, val))
            F += self.shrinkage * val[leaf_of]
            self.train_loss_.append(float(np.mean((y - F) ** 2)))
        self.n_features_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = np.full(X.shape[0], self.init_)
        for tree in self.trees_:
            out += self.shrinkage * tree.predict(X)
        return out
