"""Two-stage normalization: robust (median / IQR) scaling, then min-max to [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DimensionMismatchError, EmptyDatasetError


def quantile(values, q):
    """Column quantiles with linear interpolation at position ``q * (n - 1)``."""
    values = np.asarray(values, dtype=np.float64)
    return np.quantile(values, q, axis=0, method="linear")


def _round_down_f32(x):
    out = x.astype(np.float32)
    over = out.astype(np.float64) > x
    out[over] = np.nextafter(out[over], np.float32(-np.inf))
    return out


def _round_up_f32(x):
    out = x.astype(np.float32)
    under = out.astype(np.float64) < x
    out[under] = np.nextafter(out[under], np.float32(np.inf))
    return out


@dataclass(frozen=True, eq=False)
class ScalerChain:
    medians: np.ndarray
    iqrs: np.ndarray
    mins: np.ndarray
    maxes: np.ndarray

    @property
    def feature_count(self) -> int:
        return self.medians.size

    def robust_stage(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        iqr = self.iqrs.astype(np.float64)
        scale = np.where(iqr > 0, iqr, 1.0)
        return (X - self.medians.astype(np.float64)) / scale

    def minmax_stage(self, Z) -> np.ndarray:
        lo = self.mins.astype(np.float64)
        span = self.maxes.astype(np.float64) - lo
        degenerate = span <= 0
        out = (Z - lo) / np.where(degenerate, 1.0, span)
        out[:, degenerate] = 0.0
        return out

    def to_dict(self):
        return {
            "medians": [float(v) for v in self.medians],
            "iqrs": [float(v) for v in self.iqrs],
            "mins": [float(v) for v in self.mins],
            "maxes": [float(v) for v in self.maxes],
        }

    @classmethod
    def from_dict(cls, d):
        arr = {k: np.asarray(d[k], dtype=np.float32) for k in ("medians", "iqrs", "mins", "maxes")}
        return cls(**arr)


def fit_scaler_chain(train: Dataset) -> ScalerChain:
    """Fit both stages on the training rows only.

    Min/max are taken from the robust-scaled training matrix and rounded
    outward when stored as float32 so that every training value still maps
    into [0, 1].
    """
    if train.n_rows == 0:
        raise EmptyDatasetError("cannot fit scalers on an empty dataset")
    X = train.features.astype(np.float64)
    q1, med, q3 = quantile(X, [0.25, 0.5, 0.75])
    medians = med.astype(np.float32)
    iqrs = np.maximum(q3 - q1, 0.0).astype(np.float32)
    # the min-max stage cancels the robust scale, so an IQR so small that the
    # scaled range would overflow float32 is replaced by the divide-by-one rule
    spread = X.max(axis=0) - X.min(axis=0) + np.abs(X - medians.astype(np.float64)).max(axis=0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        overflow = (iqrs > 0) & ~(spread / iqrs.astype(np.float64) < np.finfo(np.float32).max / 4)
    iqrs[overflow] = 0.0
    partial = ScalerChain(medians, iqrs, np.zeros_like(medians), np.zeros_like(medians))
    Z = partial.robust_stage(X)
    zmin, zmax = Z.min(axis=0), Z.max(axis=0)
    mins = _round_down_f32(zmin)
    maxes = _round_up_f32(zmax)
    flat = zmin == zmax
    maxes[flat] = mins[flat]
    return ScalerChain(medians, iqrs, mins, maxes)


def transform(chain: ScalerChain, data: Dataset) -> Dataset:
    """Apply both stages. Values outside the training range are not clipped."""
    if data.feature_count != chain.feature_count:
        raise DimensionMismatchError(chain.feature_count, data.feature_count)
    if data.n_rows == 0:
        return data
    out = chain.minmax_stage(chain.robust_stage(data.features))
    return data.with_features(out)
