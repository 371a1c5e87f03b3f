"""Two-instance weighted soft voting and a seeded random-search tuner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DataError, MalpipeError, ModelError, NotFittedError
from .learners import ForestModel, HyperParams, default_hyperparams, fit_model
from .metrics import accuracy_score

WEIGHT_GRID = tuple(i / 10 for i in range(11))
THRESHOLD = 0.5


def combine(p1, p2, w1: float) -> np.ndarray:
    """Soft vote ``w1 * p1 + (1 - w1) * p2``."""
    return w1 * np.asarray(p1, dtype=np.float64) + (1.0 - w1) * np.asarray(p2, dtype=np.float64)


@dataclass(eq=False)
class VotingEnsemble:
    model_1: ForestModel
    model_2: ForestModel
    w1: float | None = None
    grid_report: list[dict] = field(default_factory=list)

    @property
    def w2(self) -> float | None:
        return None if self.w1 is None else 1.0 - self.w1

    @property
    def is_weighted(self) -> bool:
        return self.w1 is not None

    def member_probabilities(self, data):
        return self.model_1.predict_proba(data), self.model_2.predict_proba(data)


def train_ensemble(
    partition_a: Dataset,
    partition_b: Dataset,
    learner_kind: str,
    hp: HyperParams | tuple[HyperParams, HyperParams] | None = None,
    seeds: tuple[int, int] = (0, 1),
) -> VotingEnsemble:
    """Fit one instance per partition. ``hp`` may be a pair when the instances were tuned separately."""
    if partition_a.feature_count != partition_b.feature_count:
        raise DataError("partitions disagree on feature count")
    if hp is None:
        hp = default_hyperparams(learner_kind)
    hp_a, hp_b = hp if isinstance(hp, tuple) else (hp, hp)
    m1 = fit_model(learner_kind, partition_a, hp_a, seeds[0])
    m2 = fit_model(learner_kind, partition_b, hp_b, seeds[1])
    return VotingEnsemble(m1, m2)


def _pick_weight(accuracies: dict[float, float]) -> float:
    # highest accuracy, then closest to 0.5, then smaller w1
    return min(accuracies, key=lambda w: (-accuracies[w], abs(w - 0.5), w))


def search_weights(ensemble: VotingEnsemble, selection_data: Dataset) -> VotingEnsemble:
    """Score every grid weight on ``selection_data`` and return a weighted copy."""
    if selection_data.n_rows == 0:
        raise DataError("weight search needs a nonempty selection set")
    if selection_data.labels is None:
        raise DataError("weight search needs labels")
    p1, p2 = ensemble.member_probabilities(selection_data)
    y = selection_data.labels
    accuracies = {}
    for w in WEIGHT_GRID:
        labels = (combine(p1, p2, w) >= THRESHOLD).astype(np.int8)
        accuracies[w] = accuracy_score(y, labels)
    best = _pick_weight(accuracies)
    report = [{"w1": w, "w2": 1.0 - w, "accuracy": accuracies[w]} for w in WEIGHT_GRID]
    return VotingEnsemble(ensemble.model_1, ensemble.model_2, best, report)


def predict(ensemble: VotingEnsemble, data) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and hard labels (1 iff p >= 0.5) under the frozen weights."""
    if not ensemble.is_weighted:
        raise NotFittedError("ensemble weights are unset; run search_weights first")
    p1, p2 = ensemble.member_probabilities(data)
    p = combine(p1, p2, ensemble.w1)
    return p, (p >= THRESHOLD).astype(np.int8)


# ---------------------------------------------------------------------------
# hyperparameter search

SEARCH_SPACES = {
    "gbdt_a": {
        "n_trees": ["int", 100, 500],
        "max_depth": ["int", 4, 10],
        "learning_rate": ["log", 0.01, 0.3],
        "min_samples_leaf": ["int", 5, 50],
    },
    "gbdt_b": {
        "n_trees": ["int", 100, 500],
        "max_leaves": ["int", 15, 127],
        "learning_rate": ["log", 0.01, 0.3],
        "min_samples_leaf": ["int", 5, 50],
    },
    "random_forest": {
        "n_trees": ["int", 100, 500],
        "max_depth": ["int", 4, 10],
        "min_samples_leaf": ["int", 5, 50],
    },
    "extra_trees": {
        "n_trees": ["int", 100, 500],
        "max_depth": ["int", 4, 10],
        "min_samples_leaf": ["int", 5, 50],
    },
}


@dataclass(frozen=True)
class TunerConfig:
    """Random-search settings.

    ``search_space`` maps a hyperparameter name to ``["int", lo, hi]``
    (inclusive), ``["uniform", lo, hi]``, ``["log", lo, hi]`` or
    ``["choice", [values...]]``.
    """

    n_trials: int = 20
    search_space: dict = field(default_factory=dict)
    objective: str = "accuracy"
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1:
            raise DataError("n_trials must be >= 1")
        if self.objective != "accuracy":
            raise DataError(f"unsupported tuning objective {self.objective!r}")
        for name, spec in self.search_space.items():
            _validate_range(name, spec)

    def space_for(self, kind: str) -> dict:
        return self.search_space or SEARCH_SPACES[kind]

    def to_dict(self):
        return {"n_trials": self.n_trials, "search_space": self.search_space, "objective": self.objective, "seed": self.seed}


def _validate_range(name, spec):
    if not isinstance(spec, (list, tuple)) or not spec:
        raise DataError(f"search range for {name!r} must be a non-empty list")
    kind = spec[0]
    if kind == "choice":
        if len(spec) != 2 or not list(spec[1]):
            raise DataError(f"choice range for {name!r} needs a non-empty value list")
    elif kind in ("int", "uniform", "log"):
        if len(spec) != 3 or spec[1] > spec[2]:
            raise DataError(f"range for {name!r} must be [{kind!r}, lo, hi] with lo <= hi")
        if kind == "log" and spec[1] <= 0:
            raise DataError(f"log range for {name!r} must be positive")
    else:
        raise DataError(f"unknown range kind {kind!r} for {name!r}")


def sample_params(space: dict, rng: np.random.Generator) -> dict:
    """One draw from every range, in sorted-name order."""
    out = {}
    for name in sorted(space):
        kind, *args = space[name]
        if kind == "int":
            out[name] = int(rng.integers(args[0], args[1] + 1))
        elif kind == "uniform":
            out[name] = float(rng.uniform(args[0], args[1]))
        elif kind == "log":
            out[name] = float(math.exp(rng.uniform(math.log(args[0]), math.log(args[1]))))
        else:
            values = list(args[0])
            out[name] = values[int(rng.integers(len(values)))]
    return out


@dataclass
class TuneResult:
    best: HyperParams
    trace: list[dict]


def random_search(learner_kind: str, partition: Dataset, holdout: Dataset, cfg: TunerConfig,
                  base: HyperParams | None = None) -> TuneResult:
    """Random search; trial i samples with seed (cfg.seed, i) and fits with seed cfg.seed + i.

    Failed fits score -inf. Ties keep the earliest trial.
    """
    base = base or default_hyperparams(learner_kind)
    space = cfg.space_for(learner_kind)
    best_score, best_hp, trace = -math.inf, None, []
    for i in range(cfg.n_trials):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        params = sample_params(space, rng)
        try:
            hp = base.updated(**params)
            model = fit_model(learner_kind, partition, hp, cfg.seed + i)
            score = accuracy_score(holdout.labels, (model.predict_proba(holdout) >= THRESHOLD).astype(np.int8))
        except (MalpipeError, ValueError, TypeError) as exc:
            trace.append({"trial": i, "params": params, "score": None, "error": str(exc)})
            continue
        trace.append({"trial": i, "params": params, "score": score})
        if score > best_score:
            best_score, best_hp = score, hp
    if best_hp is None:
        raise ModelError(f"all {cfg.n_trials} tuning trials failed")
    return TuneResult(best_hp, trace)


def tune(learner_kind: str, partition: Dataset, holdout: Dataset, cfg: TunerConfig) -> HyperParams:
    return random_search(learner_kind, partition, holdout, cfg).best
