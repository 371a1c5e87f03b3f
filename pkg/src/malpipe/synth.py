"""Seeded synthetic corpora with a recomputable labeling rule.

Features are i.i.d. Gaussian, ``N(shift, 1)``. The clean label is
``1 iff sum_i c_i * x[j_i] > threshold`` over ``informative`` columns ``j_i``;
rows are drawn in batches and accepted until each class holds half of the
requested rows, then each label is flipped with probability ``noise``.
Rule constants depend only on ``rule_seed`` (defaults to ``seed``), so a
shifted corpus can share the rule of an unshifted one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError


@dataclass(frozen=True)
class SynthSpec:
    rows: int
    dims: int
    informative: int
    noise: float = 0.0
    seed: int = 0
    shift: float = 0.0
    rule_seed: int | None = None

    def __post_init__(self):
        if self.rows < 2:
            raise DataError("rows must be >= 2")
        if self.dims < 1:
            raise DataError("dims must be >= 1")
        if not 0 <= self.informative <= self.dims:
            raise DataError("informative must be in [0, dims]")
        if not 0.0 <= self.noise <= 0.5:
            raise DataError("noise must be in [0, 0.5]")


@dataclass(frozen=True)
class LabelRule:
    indices: np.ndarray
    coefficients: np.ndarray
    threshold: float

    def clean_labels(self, X) -> np.ndarray:
        if self.indices.size == 0:
            raise DataError("an empty rule does not determine labels")
        X = np.asarray(X, dtype=np.float64)
        return (X[:, self.indices] @ self.coefficients > self.threshold).astype(np.int8)

    def to_dict(self):
        return {
            "indices": [int(i) for i in self.indices],
            "coefficients": [float(c) for c in self.coefficients],
            "threshold": self.threshold,
        }


def label_rule(dims: int, informative: int, rule_seed: int) -> LabelRule:
    rng = np.random.default_rng(np.random.SeedSequence([rule_seed, 0]))
    idx = np.sort(rng.choice(dims, informative, replace=False))
    signs = rng.choice([-1.0, 1.0], informative)
    coef = signs * rng.uniform(0.5, 1.5, informative)
    return LabelRule(idx.astype(np.int64), coef, 0.0)


def generate(spec: SynthSpec) -> tuple[Dataset, LabelRule]:
    rule = label_rule(spec.dims, spec.informative, spec.seed if spec.rule_seed is None else spec.rule_seed)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1]))
    n_pos = spec.rows // 2
    n_neg = spec.rows - n_pos

    if spec.informative == 0:
        X = rng.normal(spec.shift, 1.0, (spec.rows, spec.dims))
        y = rng.permutation(np.r_[np.zeros(n_neg, np.int8), np.ones(n_pos, np.int8)])
    else:
        blocks, labels = [], []
        need = {0: n_neg, 1: n_pos}
        for _ in range(10_000):
            # labels come from the stored float32 values so the rule can be re-applied to files
            batch = rng.normal(spec.shift, 1.0, (max(spec.rows, 256), spec.dims)).astype(np.float32)
            yb = rule.clean_labels(batch)
            keep = np.zeros(yb.size, bool)
            for c in (0, 1):
                pos = np.flatnonzero(yb == c)[: need[c]]
                keep[pos] = True
                need[c] -= pos.size
            blocks.append(batch[keep])
            labels.append(yb[keep])
            if need[0] == 0 and need[1] == 0:
                break
        else:
            raise DataError("class balancing did not converge; the shift leaves one class too rare")
        X = np.concatenate(blocks)
        y = np.concatenate(labels)

    flips = rng.random(spec.rows) < spec.noise
    y = np.where(flips, 1 - y, y).astype(np.int8)
    return Dataset.from_arrays(X.astype(np.float32), y), rule
