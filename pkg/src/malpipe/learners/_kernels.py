"""Compiled inner loops. Accumulation order is fixed by the row order passed in."""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def build_histogram(binned, rows, feats, g, h, n_bins):
    """Per (feature, bin) sums of g, h and row count over ``rows``."""
    k = feats.size
    out = np.zeros((k, n_bins, 3))
    for i in range(rows.size):
        r = rows[i]
        gr = g[r]
        hr = h[r]
        for jj in range(k):
            b = binned[r, feats[jj]]
            out[jj, b, 0] += gr
            out[jj, b, 1] += hr
            out[jj, b, 2] += 1.0
    return out


@njit(nogil=True, cache=True)
def accumulate_tree(X, feature, threshold, left, right, value, scale, out):
    """out[i] += scale * leaf_value(X[i]) for one tree."""
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += scale * value[node]


@njit(nogil=True, cache=True)
def _gini_mass(pos, cnt):
    if cnt <= 0.0:
        return 0.0
    return 2.0 * pos * (cnt - pos) / cnt


@njit(nogil=True, cache=True)
def scan_splits(hist, use_gini, min_samples_leaf, lam):
    """Best (feature position, bin, gain) over prefix splits of ``hist``.

    Strictly-greater comparison keeps the first maximum in (feature, bin) order.
    Returns gain -inf when no candidate satisfies ``min_samples_leaf``.
    """
    k, n_bins, _ = hist.shape
    best_p, best_b, best_gain = -1, -1, -np.inf
    for p in range(k):
        tg = 0.0
        th = 0.0
        tc = 0.0
        for b in range(n_bins):
            tg += hist[p, b, 0]
            th += hist[p, b, 1]
            tc += hist[p, b, 2]
        gl = 0.0
        hl = 0.0
        cl = 0.0
        for b in range(n_bins - 1):
            gl += hist[p, b, 0]
            hl += hist[p, b, 1]
            cl += hist[p, b, 2]
            cr = tc - cl
            if cl < min_samples_leaf or cr < min_samples_leaf:
                continue
            gr = tg - gl
            if use_gini:
                gain = _gini_mass(tg, tc) - _gini_mass(gl, cl) - _gini_mass(gr, cr)
            else:
                hr = th - hl
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - tg * tg / (th + lam))
            if gain > best_gain:
                best_p, best_b, best_gain = p, b, gain
    return best_p, best_b, best_gain
