"""Binary decision tree storage, split scoring and prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import accumulate_tree, scan_splits

LAMBDA = 1.0  # L2 penalty on GBDT leaf values


@dataclass(eq=False)
class Tree:
    """Flat pre-order tree. ``feature[i] == -1`` marks a leaf.

    Routing: go left iff ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def accumulate(self, X, out, scale=1.0):
        accumulate_tree(X, self.feature, self.threshold, self.left, self.right, self.value, scale, out)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float32)
        out = np.zeros(X.shape[0])
        self.accumulate(X, out)
        return out

    def to_nodes(self) -> list[dict]:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"v": float(self.value[i])})
            else:
                nodes.append({
                    "f": int(self.feature[i]),
                    "t": float(self.threshold[i]),
                    "l": int(self.left[i]),
                    "r": int(self.right[i]),
                })
        return nodes

    @classmethod
    def from_nodes(cls, nodes: list[dict]) -> Tree:
        n = len(nodes)
        feature = np.full(n, -1, np.int32)
        threshold = np.zeros(n, np.float32)
        left = np.full(n, -1, np.int32)
        right = np.full(n, -1, np.int32)
        value = np.zeros(n, np.float64)
        for i, node in enumerate(nodes):
            if "v" in node:
                value[i] = node["v"]
            else:
                feature[i], threshold[i] = node["f"], node["t"]
                left[i], right[i] = node["l"], node["r"]
        return cls(feature, threshold, left, right, value)

    def equals(self, other: Tree) -> bool:
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("feature", "threshold", "left", "right", "value")
        )


class TreeBuilder:
    """Collects nodes in creation order, then emits a pre-order :class:`Tree`."""

    def __init__(self):
        self.feature, self.threshold, self.children, self.value = [], [], [], []

    def add_leaf(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.children.append((-1, -1))
        self.value.append(float(value))
        return len(self.feature) - 1

    def make_split(self, node, feature, threshold, left, right):
        self.feature[node] = int(feature)
        self.threshold[node] = threshold
        self.children[node] = (left, right)
        self.value[node] = 0.0

    def build(self) -> Tree:
        order, stack = [], [0]
        while stack:
            i = stack.pop()
            order.append(i)
            if self.feature[i] >= 0:
                l, r = self.children[i]
                stack.append(r)
                stack.append(l)
        new_id = {old: new for new, old in enumerate(order)}
        n = len(order)
        feature = np.array([self.feature[i] for i in order], np.int32)
        threshold = np.array([self.threshold[i] for i in order], np.float32)
        value = np.array([self.value[i] for i in order], np.float64)
        left = np.full(n, -1, np.int32)
        right = np.full(n, -1, np.int32)
        for new, old in enumerate(order):
            if self.feature[old] >= 0:
                l, r = self.children[old]
                left[new], right[new] = new_id[l], new_id[r]
        return Tree(feature, threshold, left, right, value)


# ---------------------------------------------------------------------------
# split scoring on (…, 3) stat arrays: [sum_g, sum_h, count]


def newton_gain(left, right, lam=LAMBDA):
    """Second-order logistic split gain; stats hold gradient and hessian sums."""
    gl, hl = left[..., 0], left[..., 1]
    gr, hr = right[..., 0], right[..., 1]
    g, h = gl + gr, hl + hr
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam))


def _gini_mass(pos, cnt):
    # count * gini impurity == 2 * pos * neg / count
    with np.errstate(divide="ignore", invalid="ignore"):
        m = 2.0 * pos * (cnt - pos) / cnt
    return np.where(cnt > 0, m, 0.0)


def gini_gain(left, right):
    """Decrease in count-weighted Gini impurity; stats hold positive counts in slot 0."""
    pl, cl = left[..., 0], left[..., 2]
    pr, cr = right[..., 0], right[..., 2]
    return _gini_mass(pl + pr, cl + cr) - _gini_mass(pl, cl) - _gini_mass(pr, cr)


GAINS = {"newton": newton_gain, "gini": gini_gain}


def best_histogram_split(hist, criterion: str, min_samples_leaf: int, min_split_gain: float):
    """Best (feature position, bin, gain) from a (k, n_bins, 3) histogram, or None.

    Candidate "feature p, bin b" sends bins 0..b left. Ties resolve to the
    lowest feature position, then the lowest bin.
    """
    if criterion not in GAINS:
        raise ValueError(f"unknown split criterion {criterion!r}")
    p, b, gain = scan_splits(hist, criterion == "gini", float(min_samples_leaf), LAMBDA)
    if p < 0 or not (gain > 0.0 and gain >= min_split_gain):
        return None
    return int(p), int(b), float(gain)


def leaf_value(stats, criterion: str) -> float:
    if criterion == "newton":
        return float(-stats[0] / (stats[1] + LAMBDA))
    return float(stats[0] / stats[2]) if stats[2] > 0 else 0.0
