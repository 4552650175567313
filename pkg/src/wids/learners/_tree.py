"""Shared CART core: Gini classification trees and second-order regression trees.

Split search is vectorized across all candidate features of a node: one
column-wise argsort, cumulative class counts (or gradient sums), and a single
argmin over every (position, feature) pair. Ties resolve to the earliest
position, then the lowest candidate-feature slot, so growth is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAIN_EPS = 1e-12


@dataclass
class Tree:
    feature: np.ndarray  # (n_nodes,) int64, -1 marks a leaf
    threshold: np.ndarray  # (n_nodes,) float64
    left: np.ndarray  # (n_nodes,) int64
    right: np.ndarray  # (n_nodes,) int64
    value: np.ndarray  # (n_nodes, C) class distribution or (n_nodes,) leaf weight

    @property
    def n_nodes(self) -> int:
        return self.feature.size


class _TreeBuilder:
    def __init__(self, value_width: int):
        self.feature: list = []
        self.threshold: list = []
        self.left: list = []
        self.right: list = []
        self.value: list = []
        self.value_width = value_width

    def add_node(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def make_internal(self, node: int, feature: int, threshold: float,
                      left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=np.float64),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=np.float64),
        )


def _split_positions_mask(sorted_vals: np.ndarray, min_leaf: int) -> np.ndarray:
    """Valid split positions: distinct adjacent values, both sides >= min_leaf."""
    m = sorted_vals.shape[0]
    valid = sorted_vals[1:] > sorted_vals[:-1]
    if min_leaf > 1:
        n_left = np.arange(1, m)
        size_ok = (n_left >= min_leaf) & (m - n_left >= min_leaf)
        valid &= size_ok[:, None]
    return valid


def _best_split_gini(x, onehot, idx, feats, min_leaf):
    """Minimize summed child Gini impurity over all (position, feature) pairs.

    Returns (feature, threshold, impurity decrease) or None.
    """
    m = idx.size
    xs = x[np.ix_(idx, feats)]
    order = np.argsort(xs, axis=0, kind="stable")
    sv = np.take_along_axis(xs, order, axis=0)
    counts_sorted = onehot[idx][order]  # (m, f, C)
    left = np.cumsum(counts_sorted, axis=0, dtype=np.float64)
    total = left[-1, 0]  # identical across feature columns
    n_left = np.arange(1, m + 1, dtype=np.float64).reshape(-1, 1)
    n_right = m - n_left
    sumsq_left = (left ** 2).sum(axis=2)
    sumsq_right = ((total[None, None, :] - left) ** 2).sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = (n_left - sumsq_left / n_left) + np.where(
            n_right > 0, n_right - sumsq_right / np.maximum(n_right, 1.0), 0.0
        )
    score = score[:-1]
    score[~_split_positions_mask(sv, min_leaf)] = np.inf
    flat = int(np.argmin(score))
    pos, f_slot = np.unravel_index(flat, score.shape)
    if not np.isfinite(score[pos, f_slot]):
        return None
    parent = m - float((total ** 2).sum()) / m
    decrease = parent - float(score[pos, f_slot])
    if decrease <= GAIN_EPS:
        return None
    threshold = 0.5 * (sv[pos, f_slot] + sv[pos + 1, f_slot])
    return int(feats[f_slot]), float(threshold), decrease


def grow_classification_tree(
    x: np.ndarray,
    onehot: np.ndarray,
    row_idx: np.ndarray,
    *,
    max_depth: int,
    min_samples_leaf: int = 1,
    n_candidate_features: int | None = None,
    rng: np.random.Generator | None = None,
    importance_out: np.ndarray | None = None,
) -> Tree:
    """Gini CART over the given rows; leaves store class distributions.

    ``n_candidate_features`` < d draws a fresh random feature subset per node
    (the random-forest rule); None means all features.
    """
    d = x.shape[1]
    n_root = row_idx.size
    builder = _TreeBuilder(onehot.shape[1])

    def node_value(idx):
        counts = onehot[idx].sum(axis=0)
        return counts / idx.size

    root = builder.add_node(node_value(row_idx))
    stack = [(root, row_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = onehot[idx].sum(axis=0)
        if depth >= max_depth or idx.size < 2 * min_samples_leaf or counts.max() == idx.size:
            continue
        if n_candidate_features is not None and n_candidate_features < d:
            feats = np.sort(rng.choice(d, size=n_candidate_features, replace=False))
        else:
            feats = np.arange(d)
        found = _best_split_gini(x, onehot, idx, feats, min_samples_leaf)
        if found is None:
            continue
        feature, threshold, decrease = found
        if importance_out is not None:
            importance_out[feature] += decrease / n_root
        goes_left = x[idx, feature] <= threshold
        left_idx, right_idx = idx[goes_left], idx[~goes_left]
        left = builder.add_node(node_value(left_idx))
        right = builder.add_node(node_value(right_idx))
        builder.make_internal(node, feature, threshold, left, right)
        stack.append((right, right_idx, depth + 1))
        stack.append((left, left_idx, depth + 1))
    return builder.build()


def _best_split_grad(x, g, h, idx, feats, min_leaf, l2):
    """Maximize the second-order gain 0.5*(GL^2/(HL+l2) + GR^2/(HR+l2) - G^2/(H+l2))."""
    m = idx.size
    xs = x[np.ix_(idx, feats)]
    order = np.argsort(xs, axis=0, kind="stable")
    sv = np.take_along_axis(xs, order, axis=0)
    gl = np.cumsum(g[idx][order], axis=0)
    hl = np.cumsum(h[idx][order], axis=0)
    g_total, h_total = gl[-1, 0], hl[-1, 0]
    gain = (
        gl ** 2 / (hl + l2)
        + (g_total - gl) ** 2 / (h_total - hl + l2)
        - g_total ** 2 / (h_total + l2)
    ) * 0.5
    gain = gain[:-1]
    gain[~_split_positions_mask(sv, min_leaf)] = -np.inf
    flat = int(np.argmax(gain))
    pos, f_slot = np.unravel_index(flat, gain.shape)
    if not np.isfinite(gain[pos, f_slot]) or gain[pos, f_slot] <= GAIN_EPS:
        return None
    threshold = 0.5 * (sv[pos, f_slot] + sv[pos + 1, f_slot])
    return int(feats[f_slot]), float(threshold)


def grow_regression_tree(
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    row_idx: np.ndarray,
    *,
    max_depth: int,
    l2: float,
    min_samples_leaf: int = 1,
) -> Tree:
    """Boosting tree on gradient/hessian stats; leaves store -G/(H+l2)."""
    builder = _TreeBuilder(1)

    def node_value(idx):
        return -g[idx].sum() / (h[idx].sum() + l2)

    root = builder.add_node(node_value(row_idx))
    stack = [(root, row_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or idx.size < 2 * min_samples_leaf:
            continue
        found = _best_split_grad(x, g, h, idx, np.arange(x.shape[1]), min_samples_leaf, l2)
        if found is None:
            continue
        feature, threshold = found
        goes_left = x[idx, feature] <= threshold
        left_idx, right_idx = idx[goes_left], idx[~goes_left]
        left = builder.add_node(node_value(left_idx))
        right = builder.add_node(node_value(right_idx))
        builder.make_internal(node, feature, threshold, left, right)
        stack.append((right, right_idx, depth + 1))
        stack.append((left, left_idx, depth + 1))
    return builder.build()


def tree_apply(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Leaf payload for every row (batch traversal, one pass per depth level)."""
    node = np.zeros(x.shape[0], dtype=np.int64)
    while True:
        feats = tree.feature[node]
        internal = feats >= 0
        if not internal.any():
            break
        rows = np.where(internal)[0]
        cur = node[rows]
        goes_left = x[rows, feats[rows]] <= tree.threshold[cur]
        node[rows] = np.where(goes_left, tree.left[cur], tree.right[cur])
    return tree.value[node]


@dataclass
class PackedForest:
    """All trees of an ensemble concatenated so a whole forest traverses in
    one vectorized descent (a few numpy ops per depth level, not per tree)."""

    feature: np.ndarray  # (N,) -1 marks leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (N, C)
    roots: np.ndarray  # (T,)


def pack_forest(trees: list) -> PackedForest:
    offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    left = np.concatenate([
        np.where(t.left >= 0, t.left + off, -1) for t, off in zip(trees, offsets)
    ])
    right = np.concatenate([
        np.where(t.right >= 0, t.right + off, -1) for t, off in zip(trees, offsets)
    ])
    value = np.concatenate([
        t.value.reshape(t.n_nodes, -1) for t in trees
    ])
    return PackedForest(feature, threshold, left, right, value,
                        np.asarray(offsets, dtype=np.int64))


def packed_apply(pf: PackedForest, x: np.ndarray) -> np.ndarray:
    """Leaf payloads for every (row, tree) pair: shape (n, T, C)."""
    n = x.shape[0]
    node = np.tile(pf.roots, (n, 1))
    row = np.arange(n)[:, None]
    while True:
        feats = pf.feature[node]
        internal = feats >= 0
        if not internal.any():
            break
        xv = x[row, np.where(internal, feats, 0)]
        goes_left = internal & (xv <= pf.threshold[node])
        node = np.where(goes_left, pf.left[node],
                        np.where(internal, pf.right[node], node))
    return pf.value[node]
