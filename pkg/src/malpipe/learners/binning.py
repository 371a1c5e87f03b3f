"""Equal-frequency feature binning for histogram split search."""

from __future__ import annotations

import numpy as np


def _cut_between(lo, hi):
    """A float32 cut c with lo <= c < hi, as close to the midpoint as float32 allows."""
    mid = ((lo.astype(np.float64) + hi.astype(np.float64)) / 2.0).astype(np.float32)
    return np.where(mid >= hi, lo, mid).astype(np.float32)


def feature_edges(column, n_bins: int) -> np.ndarray:
    """Bin upper edges for one column; at most ``n_bins - 1`` of them.

    With no more distinct values than bins every distinct value gets its own
    bin. Otherwise cuts are placed at equal-frequency quantile positions,
    snapped to gaps between distinct values.
    """
    u, counts = np.unique(np.asarray(column, dtype=np.float32), return_counts=True)
    if u.size <= 1:
        return np.zeros(0, np.float32)
    if u.size <= n_bins:
        idx = np.arange(u.size - 1)
    else:
        cum = np.cumsum(counts)
        targets = cum[-1] * np.arange(1, n_bins) / n_bins
        idx = np.unique(np.searchsorted(cum, targets, side="left"))
        idx = idx[idx < u.size - 1]
    return _cut_between(u[idx], u[idx + 1])


class BinMapper:
    """Per-feature bin edges fitted on one training matrix."""

    def __init__(self, edges: list[np.ndarray], n_bins: int):
        self.edges = edges
        self.n_bins = n_bins

    @classmethod
    def fit(cls, X, n_bins: int = 256) -> BinMapper:
        if n_bins < 2:
            raise ValueError("n_bins must be at least 2")
        X = np.asarray(X, dtype=np.float32)
        return cls([feature_edges(X[:, j], n_bins) for j in range(X.shape[1])], n_bins)

    @property
    def dtype(self):
        return np.uint8 if self.n_bins <= 256 else np.uint16

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32)
        out = np.empty(X.shape, dtype=self.dtype)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out

    def threshold(self, feature: int, bin_index: int) -> np.float32:
        """Raw-value threshold equivalent to ``bin <= bin_index``."""
        return self.edges[feature][bin_index]
