"""Gradient-boosted trees with logistic loss and histogram split search.

``gbdt_a`` grows each tree level by level up to ``max_depth``; ``gbdt_b``
grows leaf-wise, always splitting the leaf with the largest gain, until
``max_leaves`` leaves exist (``max_depth`` still caps the depth).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import DataError
from ._kernels import build_histogram
from .binning import BinMapper
from .model import ForestModel, HyperParams, check_trainable, sigmoid
from .tree import TreeBuilder, best_histogram_split, leaf_value


def logistic_loss(scores, labels) -> np.ndarray:
    """Per-row negative log-likelihood for raw log-odds scores."""
    s = np.asarray(scores, dtype=np.float64)
    return np.logaddexp(0.0, s) - np.asarray(labels, dtype=np.float64) * s


def logistic_grad_hess(scores, labels):
    p = sigmoid(scores)
    return p - labels, p * (1.0 - p)


@dataclass
class _Leaf:
    node: int
    rows: np.ndarray
    depth: int
    hist: np.ndarray
    split: tuple | None


def grow_newton_tree(binned, bins: BinMapper, g, h, rows, feats, hp: HyperParams, leafwise: bool, gains=None):
    """Fit one regression tree to (g, h). ``gains`` (length d) accumulates split gains."""
    builder = TreeBuilder()

    def make_leaf(node_rows, depth, hist):
        # every row lands in exactly one bin of any feature
        node = builder.add_leaf(leaf_value(hist[0].sum(axis=0), "newton"))
        split = None
        if depth < hp.max_depth:
            split = best_histogram_split(hist, "newton", hp.min_samples_leaf, hp.min_split_gain)
        return _Leaf(node, node_rows, depth, hist, split)

    root_hist = build_histogram(binned, rows, feats, g, h, bins.n_bins)
    root = make_leaf(rows, 0, root_hist)
    # leaf-wise: best gain first; level-wise: FIFO (creation order)
    frontier, counter = [], 0

    def push(leaf):
        nonlocal counter
        if leaf.split is not None:
            key = -leaf.split[2] if leafwise else 0.0
            heapq.heappush(frontier, (key, counter, leaf))
            counter += 1

    push(root)
    n_leaves = 1
    while frontier:
        if leafwise and n_leaves >= hp.max_leaves:
            break
        leaf = heapq.heappop(frontier)[2]
        p, b, gain = leaf.split
        f = int(feats[p])
        go_left = binned[leaf.rows, f] <= b
        left_rows, right_rows = leaf.rows[go_left], leaf.rows[~go_left]
        if left_rows.size <= right_rows.size:
            lh = build_histogram(binned, left_rows, feats, g, h, bins.n_bins)
            rh = leaf.hist - lh
        else:
            rh = build_histogram(binned, right_rows, feats, g, h, bins.n_bins)
            lh = leaf.hist - rh
        left = make_leaf(left_rows, leaf.depth + 1, lh)
        right = make_leaf(right_rows, leaf.depth + 1, rh)
        builder.make_split(leaf.node, f, bins.threshold(f, b), left.node, right.node)
        if gains is not None:
            gains[f] += gain
        n_leaves += 1
        push(left)
        push(right)
    return builder.build()


def fit_gbdt(train: Dataset, hp: HyperParams, seed: int, preset: str = "gbdt_a") -> ForestModel:
    """Stagewise logistic boosting. Stops early if a round cannot split its root."""
    if preset not in ("gbdt_a", "gbdt_b"):
        raise DataError(f"unknown gbdt preset {preset!r}")
    check_trainable(train)
    X = train.features
    y = train.labels.astype(np.float64)
    n, d = X.shape
    pos = y.sum()
    base = float(np.log(pos / (n - pos)))
    bins = BinMapper.fit(X, hp.n_bins)
    binned = bins.transform(X)
    rng = np.random.default_rng(seed)
    scores = np.full(n, base)
    gains = np.zeros(d)
    trees = []
    all_rows = np.arange(n, dtype=np.int64)
    all_feats = np.arange(d, dtype=np.int64)
    n_rows_sub = max(1, int(round(hp.row_subsample_fraction * n)))
    n_feats_sub = max(1, int(round(hp.feature_subsample_fraction * d)))
    for _ in range(hp.n_trees):
        g, h = logistic_grad_hess(scores, y)
        rows = all_rows if n_rows_sub == n else np.sort(rng.choice(n, n_rows_sub, replace=False))
        feats = all_feats if n_feats_sub == d else np.sort(rng.choice(d, n_feats_sub, replace=False))
        tree = grow_newton_tree(binned, bins, g, h, rows, feats, hp, leafwise=preset == "gbdt_b", gains=gains)
        if tree.n_nodes == 1:
            break
        trees.append(tree)
        tree.accumulate(X, scores, hp.learning_rate)
    return ForestModel(
        kind=preset,
        trees=trees,
        n_features=d,
        hyperparams=hp,
        seed=seed,
        base_score=base,
        learning_rate=hp.learning_rate,
        importances=gains,
    )
