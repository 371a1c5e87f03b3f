"""Hyperparameters and the trained-forest container shared by all learners."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ..data import Dataset
from ..errors import DataError, DimensionMismatchError, SingleClassError
from .tree import Tree

KINDS = ("gbdt_a", "gbdt_b", "random_forest", "extra_trees")
GBDT_KINDS = ("gbdt_a", "gbdt_b")


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 200
    max_depth: int = 6
    min_samples_leaf: int = 20
    learning_rate: float = 0.1
    n_bins: int = 256
    feature_subsample_fraction: float = 1.0
    row_subsample_fraction: float = 1.0
    min_split_gain: float = 0.0
    # leaf budget for leaf-wise growth; ignored by the other learners
    max_leaves: int = 31
    # test-only switch: random forest trees see every row exactly once
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 0:
            raise DataError("n_trees must be >= 0")
        for name in ("max_depth", "min_samples_leaf", "max_leaves"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        if not 2 <= self.n_bins <= 65536:
            raise DataError("n_bins must be in [2, 65536]")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        for name in ("feature_subsample_fraction", "row_subsample_fraction"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise DataError(f"{name} must be in (0, 1]")
        if self.min_split_gain < 0:
            raise DataError("min_split_gain must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)

    def updated(self, **kw) -> HyperParams:
        return replace(self, **kw)


DEFAULTS = {
    "gbdt_a": HyperParams(max_depth=6),
    "gbdt_b": HyperParams(max_depth=16, max_leaves=31),
    "random_forest": HyperParams(max_depth=16),
    "extra_trees": HyperParams(max_depth=16),
}


def default_hyperparams(kind: str) -> HyperParams:
    if kind not in DEFAULTS:
        raise DataError(f"unknown learner kind {kind!r}; expected one of {KINDS}")
    return DEFAULTS[kind]


def sigmoid(s):
    s = np.asarray(s, dtype=np.float64)
    e = np.exp(-np.abs(s))
    return np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(eq=False)
class ForestModel:
    kind: str
    trees: list[Tree]
    n_features: int
    hyperparams: HyperParams
    seed: int
    base_score: float = 0.0
    learning_rate: float = 0.0
    # total split gain per feature, accumulated while fitting
    importances: np.ndarray | None = None

    @property
    def is_boosted(self) -> bool:
        return self.kind in GBDT_KINDS

    def raw_score(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float32)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatchError(self.n_features, X.shape[1] if X.ndim == 2 else X.shape)
        if self.is_boosted:
            out = np.full(X.shape[0], self.base_score)
            for t in self.trees:
                t.accumulate(X, out, self.learning_rate)
            return out
        out = np.zeros(X.shape[0])
        for t in self.trees:
            t.accumulate(X, out)
        return out

    def predict_proba(self, data) -> np.ndarray:
        X = data.features if isinstance(data, Dataset) else data
        s = self.raw_score(X)
        if self.is_boosted:
            return sigmoid(s)
        if not self.trees:
            raise DataError("bagging forest has no trees")
        return np.clip(s / len(self.trees), 0.0, 1.0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "seed": self.seed,
            "base_score": float(self.base_score),
            "learning_rate": float(self.learning_rate),
            "hyperparams": self.hyperparams.to_dict(),
            "importances": None if self.importances is None else [float(v) for v in self.importances],
            "trees": [t.to_nodes() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> ForestModel:
        imp = d.get("importances")
        return cls(
            kind=d["kind"],
            trees=[Tree.from_nodes(nodes) for nodes in d["trees"]],
            n_features=int(d["n_features"]),
            hyperparams=HyperParams.from_dict(d["hyperparams"]),
            seed=int(d["seed"]),
            base_score=float(d["base_score"]),
            learning_rate=float(d["learning_rate"]),
            importances=None if imp is None else np.asarray(imp, np.float64),
        )

    def equals(self, other: ForestModel) -> bool:
        return (
            self.kind == other.kind
            and self.n_features == other.n_features
            and self.base_score == other.base_score
            and self.learning_rate == other.learning_rate
            and len(self.trees) == len(other.trees)
            and all(a.equals(b) for a, b in zip(self.trees, other.trees))
        )


def check_trainable(train: Dataset) -> None:
    if train.labels is None:
        raise DataError("training data needs labels")
    if train.n_rows == 0:
        raise DataError("training data is empty")
    if not np.isfinite(train.features).all():
        raise DataError("training features must be finite")
    neg, pos = train.class_counts()
    if neg == 0 or pos == 0:
        raise SingleClassError("training data contains a single class")


def fit_model(kind: str, train: Dataset, hp: HyperParams | None = None, seed: int = 0) -> ForestModel:
    from .forest import fit_extra_trees, fit_random_forest
    from .gbdt import fit_gbdt

    hp = hp or default_hyperparams(kind)
    if kind in GBDT_KINDS:
        return fit_gbdt(train, hp, seed, preset=kind)
    if kind == "random_forest":
        return fit_random_forest(train, hp, seed)
    if kind == "extra_trees":
        return fit_extra_trees(train, hp, seed)
    raise DataError(f"unknown learner kind {kind!r}; expected one of {KINDS}")
