"""Numba kernels for CART regression trees.

Features are pre-binned (one code per distinct value, or quantile bins when a
column has more distinct values than ``max_bins``). Trees are grown on the
integer codes and stored as flat node arrays; children of node ``k`` sit at
``left[k]`` and ``left[k] + 1``. A forest concatenates its trees and keeps a
per-tree offset into the node arrays.
"""

import numpy as np
from numba import njit

_SORT_BELOW = 32
_ROW_BLOCK = 256


@njit(cache=True)
def _next(state):
    # splitmix64
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _randbelow(state, bound):
    state, z = _next(state)
    return state, np.int64(z % np.uint64(bound))


@njit(cache=True, nogil=True)
def bootstrap_indices(n, seed):
    state = np.uint64(seed)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        state, r = _randbelow(state, n)
        out[i] = r
    return out


@njit(cache=True, nogil=True)
def fit_tree(codes, n_bins, y, sample, max_depth, min_leaf, mtry, seed):
    """Grow one regression tree on the rows listed in ``sample``.

    ``codes`` is the (n, p) bin-code matrix and ``n_bins[f]`` the number of
    bins of feature ``f``. Returns (feature, split_bin, left, value); leaves
    carry ``feature == -1``. A row goes left when ``code <= split_bin``.
    """
    p = codes.shape[1]
    n = sample.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    split_bin = np.zeros(cap, dtype=np.int64)
    left = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)

    max_b = 1
    for f in range(p):
        if n_bins[f] > max_b:
            max_b = n_bins[f]
    hsum = np.zeros(max_b)
    hcnt = np.zeros(max_b, dtype=np.int64)

    # local column-major copy of the sampled rows keeps node scans in cache
    lcodes = np.empty((p, n), dtype=np.int32)
    ly = np.empty(n)
    for t in range(n):
        ly[t] = y[sample[t]]
    for f in range(p):
        for t in range(n):
            lcodes[f, t] = codes[sample[t], f]
    idx = np.arange(n)
    state = np.uint64(seed) ^ np.uint64(0xD1B54A32D192ED03)

    stack = np.empty((cap, 4), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1

    feats = np.arange(p)
    bc = np.empty(_SORT_BELOW + 1, dtype=np.int32)
    by = np.empty(_SORT_BELOW + 1)

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start

        s = 0.0
        for t in range(start, end):
            s += ly[idx[t]]
        value[node] = s / m

        if depth >= max_depth or m < 2 * min_leaf:
            continue
        y0 = ly[idx[start]]
        const = True
        for t in range(start + 1, end):
            if ly[idx[t]] != y0:
                const = False
                break
        if const:
            continue

        # partial Fisher-Yates draw of mtry features; they are visited in draw
        # order, so exactly tied gains go to the feature drawn first
        for j in range(p):
            feats[j] = j
        for j in range(mtry):
            state, r = _randbelow(state, p - j)
            k = j + r
            tmp = feats[j]
            feats[j] = feats[k]
            feats[k] = tmp

        parent = s * s / m
        best_gain = parent
        best_f = -1
        best_b = 0
        for jj in range(mtry):
            f = feats[jj]
            if m <= _SORT_BELOW:
                # small node: insertion sort on codes beats a full bin scan
                for t in range(m):
                    r = idx[start + t]
                    c = lcodes[f, r]
                    yv = ly[r]
                    k = t
                    while k > 0 and bc[k - 1] > c:
                        bc[k] = bc[k - 1]
                        by[k] = by[k - 1]
                        k -= 1
                    bc[k] = c
                    by[k] = yv
                sl = 0.0
                for t in range(m - min_leaf):
                    sl += by[t]
                    if t + 1 < min_leaf or bc[t] == bc[t + 1]:
                        continue
                    nl = t + 1
                    sr = s - sl
                    gain = sl * sl / nl + sr * sr / (m - nl)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_b = bc[t]
            else:
                nb = n_bins[f]
                lo = nb
                hi = -1
                for t in range(start, end):
                    r = idx[t]
                    c = lcodes[f, r]
                    hsum[c] += ly[r]
                    hcnt[c] += 1
                    if c < lo:
                        lo = c
                    if c > hi:
                        hi = c
                sl = 0.0
                nl = 0
                for b in range(lo, hi):
                    if hcnt[b] == 0:
                        continue
                    sl += hsum[b]
                    nl += hcnt[b]
                    if nl < min_leaf:
                        continue
                    if m - nl < min_leaf:
                        break
                    sr = s - sl
                    gain = sl * sl / nl + sr * sr / (m - nl)
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_b = b
                for b in range(lo, hi + 1):
                    hsum[b] = 0.0
                    hcnt[b] = 0

        if best_f < 0:
            continue

        i = start
        j = end - 1
        while i <= j:
            if lcodes[best_f, idx[i]] <= best_b:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i

        feature[node] = best_f
        split_bin[node] = best_b
        lnode = n_nodes
        n_nodes += 2
        left[node] = lnode

        stack[top, 0] = lnode + 1
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = lnode
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), split_bin[:n_nodes].copy(),
            left[:n_nodes].copy(), value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def predict_trees(X, offsets, feature, threshold, left, value):
    """Per-tree predictions, shape (n_trees, n)."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty((n_trees, n))
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = left[base + node] + 1
            out[t, i] = value[base + node]
    return out


@njit(cache=True, nogil=True)
def predict_forest(X, offsets, feature, threshold, left, value):
    """Mean over trees; rows are processed in cache-sized blocks."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(n)
    for b0 in range(0, n, _ROW_BLOCK):
        b1 = min(n, b0 + _ROW_BLOCK)
        for t in range(n_trees):
            base = offsets[t]
            for i in range(b0, b1):
                node = 0
                f = feature[base + node]
                while f >= 0:
                    node = left[base + node] + np.int64(X[i, f] > threshold[base + node])
                    f = feature[base + node]
                out[i] += value[base + node]
    for i in range(n):
        out[i] /= n_trees
    return out
