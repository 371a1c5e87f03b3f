"""Dimensionality reduction: gain-ranked feature selection and PCA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError, DimensionMismatchError, SingleClassError
from .learners import HyperParams, fit_gbdt

# fixed configuration of the model that ranks features
RANKING_PARAMS = HyperParams(
    n_trees=100,
    learning_rate=0.1,
    max_depth=6,
    n_bins=256,
    min_samples_leaf=20,
    feature_subsample_fraction=1.0,
    row_subsample_fraction=1.0,
)

EIGH_MAX_DIM = 512


@dataclass(frozen=True, eq=False)
class SelectionReducer:
    selected_indices: np.ndarray
    importances: np.ndarray
    n_features: int

    method = "selection"

    @property
    def k(self) -> int:
        return self.selected_indices.size

    def to_dict(self):
        return {
            "method": "selection",
            "n_features": self.n_features,
            "k": self.k,
            "selected_indices": [int(i) for i in self.selected_indices],
            "importances": [float(v) for v in self.importances],
        }


@dataclass(frozen=True, eq=False)
class PcaReducer:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    method = "pca"

    @property
    def n_features(self) -> int:
        return self.mean.size

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def to_dict(self):
        return {
            "method": "pca",
            "n_features": self.n_features,
            "k": self.k,
            "mean": [float(v) for v in self.mean],
            "components": [[float(v) for v in row] for row in self.components],
            "explained_variance": [float(v) for v in self.explained_variance],
        }


Reducer = SelectionReducer | PcaReducer


def reducer_from_dict(d) -> Reducer:
    if d["method"] == "selection":
        return SelectionReducer(
            np.asarray(d["selected_indices"], np.int64),
            np.asarray(d["importances"], np.float64),
            int(d["n_features"]),
        )
    if d["method"] == "pca":
        return PcaReducer(
            np.asarray(d["mean"], np.float64),
            np.asarray(d["components"], np.float64).reshape(int(d["k"]), int(d["n_features"])),
            np.asarray(d["explained_variance"], np.float64),
        )
    raise DataError(f"unknown reducer method {d['method']!r}")


def top_k(importances, k: int) -> np.ndarray:
    """Indices of the k largest values, ties toward the smaller index, returned ascending."""
    imp = np.asarray(importances, dtype=np.float64)
    order = np.lexsort((np.arange(imp.size), -imp))
    return np.sort(order[:k])


def fit_selection(train: Dataset, k: int, seed: int = 0) -> SelectionReducer:
    """Rank features by total split gain of a boosted ranking model and keep the top k."""
    d = train.feature_count
    if not 1 <= k <= d:
        raise DataError(f"k must be in [1, {d}], got {k}")
    neg, pos = train.class_counts()
    if neg == 0 or pos == 0:
        raise SingleClassError("feature ranking needs both classes")
    model = fit_gbdt(train, RANKING_PARAMS, seed, preset="gbdt_a")
    imp = np.asarray(model.importances, dtype=np.float64)
    return SelectionReducer(top_k(imp, k), imp, d)


def _fix_signs(vectors):
    """Make the largest-magnitude entry of each row positive (first such entry on ties)."""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit_pca(train: Dataset, k: int) -> PcaReducer:
    """Principal axes of the training matrix (covariance with divisor n - 1).

    Uses a dense symmetric eigendecomposition of the covariance for up to
    512 features and a thin SVD of the centered matrix beyond that.
    """
    X = train.features.astype(np.float64)
    n, d = X.shape
    if n < 2:
        raise DataError("PCA needs at least 2 rows")
    if not 1 <= k <= min(n - 1, d):
        raise DataError(f"k must be in [1, {min(n - 1, d)}] (min(n-1, d)), got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    if not np.any(Xc):
        raise DataError("training data has zero variance; no principal directions exist")
    if d <= EIGH_MAX_DIM:
        cov = Xc.T @ Xc / (n - 1)
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals, kind="stable")[::-1][:k]
        variances = vals[order]
        components = vecs[:, order].T
    else:
        _, s, vt = np.linalg.svd(Xc, full_matrices=False)
        variances = s[:k] ** 2 / (n - 1)
        components = vt[:k]
    return PcaReducer(mean, _fix_signs(components), variances.copy())


def apply_reducer(reducer: Reducer, data: Dataset) -> Dataset:
    if data.feature_count != reducer.n_features:
        raise DimensionMismatchError(reducer.n_features, data.feature_count)
    if isinstance(reducer, SelectionReducer):
        return data.with_features(data.features[:, reducer.selected_indices])
    projected = (data.features.astype(np.float64) - reducer.mean) @ reducer.components.T
    return data.with_features(projected)
