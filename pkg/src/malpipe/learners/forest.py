"""Bagged Gini forests: Random Forest (bootstrap + histogram splits) and
Extra Trees (full sample + one uniform random threshold per candidate feature).

Each tree draws from its own generator seeded by ``(seed, tree_index)``, so
the forest is identical whatever the number of worker threads.
"""

from __future__ import annotations

import math

import numpy as np

from .._parallel import thread_map
from ..data import Dataset
from ._kernels import build_histogram
from .binning import BinMapper
from .model import ForestModel, HyperParams, check_trainable
from .tree import TreeBuilder, best_histogram_split, gini_gain


def features_per_split(d: int) -> int:
    return max(1, int(math.isqrt(d)))


def _grow(builder_split, y, rows, hp: HyperParams, rng):
    """Depth-first growth. ``builder_split(rows, rng)`` returns (feature, threshold, go_left) or None."""
    builder = TreeBuilder()

    def grow(node_rows, depth):
        cnt = node_rows.size
        pos = float(y[node_rows].sum())
        node = builder.add_leaf(pos / cnt)
        if depth >= hp.max_depth or cnt < 2 * hp.min_samples_leaf or pos == 0 or pos == cnt:
            return node
        found = builder_split(node_rows, rng)
        if found is None:
            return node
        f, thr, go_left = found
        left = grow(node_rows[go_left], depth + 1)
        right = grow(node_rows[~go_left], depth + 1)
        builder.make_split(node, f, thr, left, right)
        return node

    grow(rows, 0)
    return builder.build()


def _histogram_splitter(binned, bins: BinMapper, y, ones, hp: HyperParams, n_candidates):
    d = binned.shape[1]

    def best_among(rows, feats):
        hist = build_histogram(binned, rows, feats, y, ones, bins.n_bins)
        best = best_histogram_split(hist, "gini", hp.min_samples_leaf, hp.min_split_gain)
        if best is None:
            return None
        p, b, _ = best
        f = int(feats[p])
        return f, bins.threshold(f, b), binned[rows, f] <= b

    def split(rows, rng):
        perm = rng.permutation(d)
        found = best_among(rows, np.sort(perm[:n_candidates]).astype(np.int64))
        if found is None and n_candidates < d:
            # no usable split among the sampled features: try the rest
            found = best_among(rows, np.sort(perm[n_candidates:]).astype(np.int64))
        return found

    return split


def _random_threshold_splitter(X, y, hp: HyperParams, n_candidates):
    d = X.shape[1]

    def best_among(rows, feats, rng):
        sub = X[np.ix_(rows, feats)]
        lo = sub.min(axis=0).astype(np.float64)
        hi = sub.max(axis=0).astype(np.float64)
        # one draw per candidate, constant columns included, so the stream
        # position does not depend on the data
        u = rng.random(feats.size)
        thr = (lo + u * (hi - lo)).astype(np.float32)
        thr = np.where(thr >= hi.astype(np.float32), lo.astype(np.float32), thr)
        go_left = sub <= thr
        yr = y[rows]
        cnt = float(rows.size)
        cl = go_left.sum(axis=0).astype(np.float64)
        pl = (go_left * yr[:, None]).sum(axis=0)
        left = np.stack([pl, cl, cl], axis=-1)
        right = np.stack([yr.sum() - pl, cnt - cl, cnt - cl], axis=-1)
        gain = gini_gain(left, right)
        ok = (lo < hi) & (cl >= hp.min_samples_leaf) & (cnt - cl >= hp.min_samples_leaf)
        gain = np.where(ok, gain, -np.inf)
        p = int(np.argmax(gain))
        if not (gain[p] > 0.0 and gain[p] >= hp.min_split_gain):
            return None
        return int(feats[p]), thr[p], go_left[:, p]

    def split(rows, rng):
        perm = rng.permutation(d)
        found = best_among(rows, np.sort(perm[:n_candidates]), rng)
        if found is None and n_candidates < d:
            # no usable split among the sampled features: try the rest
            found = best_among(rows, np.sort(perm[n_candidates:]), rng)
        return found

    return split


def _fit_bagging(kind, train: Dataset, hp: HyperParams, seed: int, make_splitter, bootstrap: bool) -> ForestModel:
    check_trainable(train)
    n, d = train.features.shape
    y = train.labels.astype(np.float64)
    splitter = make_splitter()
    n_boot = max(1, int(round(hp.row_subsample_fraction * n)))

    def one_tree(t):
        rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
        if bootstrap:
            rows = np.sort(rng.integers(0, n, n_boot))
        else:
            rows = np.arange(n, dtype=np.int64)
        return _grow(splitter, y, rows, hp, rng)

    trees = thread_map(one_tree, range(hp.n_trees))
    return ForestModel(kind=kind, trees=trees, n_features=d, hyperparams=hp, seed=seed)


def fit_random_forest(train: Dataset, hp: HyperParams, seed: int) -> ForestModel:
    """Bootstrap rows per tree (with replacement unless ``hp.bootstrap`` is off),
    sqrt(d) candidate features per split, Gini criterion, leaf = positive fraction."""
    X = train.features

    def make():
        bins = BinMapper.fit(X, hp.n_bins)
        y = train.labels.astype(np.float64)
        return _histogram_splitter(bins.transform(X), bins, y, np.ones_like(y), hp, features_per_split(X.shape[1]))

    return _fit_bagging("random_forest", train, hp, seed, make, bootstrap=hp.bootstrap)


def fit_extra_trees(train: Dataset, hp: HyperParams, seed: int) -> ForestModel:
    """No bootstrap; each candidate feature gets one threshold drawn uniformly
    between its node minimum and maximum; the best candidate by Gini wins."""
    X = train.features

    def make():
        return _random_threshold_splitter(X, train.labels.astype(np.float64), hp, features_per_split(X.shape[1]))

    return _fit_bagging("extra_trees", train, hp, seed, make, bootstrap=False)
