"""CART regression trees.

Splits maximise the weighted variance reduction, scanning every threshold
between consecutive distinct values of each candidate feature. Rows carry
non-negative weights: 0 excludes a row, integer counts reproduce a
bootstrap sample. The builder works on one presorted index array per
feature so a boosting run or a forest sorts the data only once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LEAF = -1


@njit(cache=True, nogil=True)
def _xorshift(state):
    x = state[0]
    x ^= (x << np.uint64(13)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x ^= x >> np.uint64(7)
    x ^= (x << np.uint64(17)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    state[0] = x
    return x


@njit(cache=True, nogil=True)
def _build(Xt, y, w, order, max_depth, min_leaf, n_try, seed):
    d, n = Xt.shape
    m = 0
    for i in range(n):
        if w[i] > 0:
            m += 1
    samples = np.empty((d, m), dtype=np.int64)
    for f in range(d):
        k = 0
        for i in range(n):
            r = order[f, i]
            if w[r] > 0:
                samples[f, k] = r
                k += 1

    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)

    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    goes_left = np.zeros(n, dtype=np.bool_)
    buf = np.empty(m, dtype=np.int64)
    feats = np.arange(d)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed) * np.uint64(2685821657736338717) + np.uint64(0x9E3779B97F4A7C15)
    if state[0] == 0:
        state[0] = np.uint64(1)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]

        W = 0.0
        S = 0.0
        SS = 0.0
        for i in range(start, end):
            r = samples[0, i]
            W += w[r]
            S += w[r] * y[r]
            SS += w[r] * y[r] * y[r]
        value[node] = S / W
        weight[node] = W
        sse = SS - S * S / W
        if depth >= max_depth or W < 2.0 * min_leaf or sse <= 1e-12 * (1.0 + SS):
            continue

        if n_try < d:
            for a in range(n_try):
                b = a + np.int64(_xorshift(state) % np.uint64(d - a))
                t = feats[a]
                feats[a] = feats[b]
                feats[b] = t
            # scan the drawn features in index order for deterministic ties
            cand = np.sort(feats[:n_try])
        else:
            cand = feats

        parent = S * S / W
        best_gain = 1e-12 * (1.0 + sse)
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        for f in cand:
            wl = 0.0
            sl = 0.0
            for i in range(start, end - 1):
                r = samples[f, i]
                wl += w[r]
                sl += w[r] * y[r]
                xc = Xt[f, r]
                xn = Xt[f, samples[f, i + 1]]
                if xn <= xc:
                    continue
                wr = W - wl
                if wl < min_leaf or wr < min_leaf:
                    continue
                sr = S - sl
                gain = sl * sl / wl + sr * sr / wr - parent
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_pos = i
                    thr = 0.5 * (xc + xn)
                    if thr >= xn:
                        thr = xc
                    best_thr = thr
        if best_f < 0:
            continue

        n_left = best_pos - start + 1
        for i in range(start, end):
            goes_left[samples[best_f, i]] = i <= best_pos
        for f in range(d):
            a = 0
            for i in range(start, end):
                r = samples[f, i]
                if goes_left[r]:
                    buf[a] = r
                    a += 1
            for i in range(start, end):
                r = samples[f, i]
                if not goes_left[r]:
                    buf[a] = r
                    a += 1
            for i in range(end - start):
                samples[f, start + i] = buf[i]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack[top, 0] = rid
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lid
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        weight[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def _predict(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature stable argsort, shape (d, n)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _predict(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "RegressionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )


def fit_tree(
    X,
    y,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    feature_fraction: float = 1.0,
    seed: int = 0,
    sample_weight=None,
    order=None,
) -> RegressionTree:
    """Fit a CART regression tree; prediction is the (weighted) leaf mean.

    ``order`` may pass a precomputed :func:`presort` of ``X``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError("y must be a vector matching X rows")
    if n == 0:
        raise ValueError("cannot fit a tree on zero rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("tree inputs must be finite (impute first)")
    w = np.ones(n) if sample_weight is None else np.ascontiguousarray(sample_weight, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("sample_weight must be non-negative with a positive entry")
    if order is None:
        order = presort(X)
    if not 0 < feature_fraction <= 1:
        raise ValueError("feature_fraction must be in (0, 1]")
    n_try = max(1, int(round(feature_fraction * d))) if d else 0
    depth = np.iinfo(np.int64).max if max_depth is None else int(max_depth)
    parts = _build(np.ascontiguousarray(X.T), y, w, order, depth, float(min_samples_leaf), n_try, int(seed) & 0xFFFFFFFF)
    return RegressionTree(*parts[:5])
