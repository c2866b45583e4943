"""Compiled inner loops for tree growth and prediction.

Randomness comes from a splitmix64 stream seeded per tree, so a tree is a
pure function of (data, seed, mtry, min_leaf, max_depth).
"""

import numpy as np
from numba import njit

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

_GAMMA = np.uint64(GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _next(state):
    state[0] += _GAMMA
    return _mix(state[0])


@njit(cache=True)
def _below(state, n):
    return np.int64(np.float64(_next(state) >> _S11) * _INV53 * n)


@njit(cache=True)
def draw_bootstrap(state, n):
    idx = np.empty(n, np.int64)
    for i in range(n):
        idx[i] = _below(state, n)
    return idx


@njit(cache=True)
def bootstrap_indices(seed, n):
    state = np.empty(1, np.uint64)
    state[0] = seed
    return draw_bootstrap(state, n)


@njit(cache=True)
def best_split(X, y, idx, start, end, features, min_leaf):
    """Best Gini split of ``idx[start:end]`` over ``features``, tried in order.

    Returns ``(feature, threshold, weighted_impurity)``; feature is -1 when no
    split leaves at least ``min_leaf`` samples on each side. Thresholds are
    midpoints between consecutive distinct values; ties keep the first found.
    """
    m = end - start
    best_f = -1
    best_thr = 0.0
    best_imp = np.inf
    vals = np.empty(m)
    labs = np.empty(m, np.int64)
    for fi in range(features.shape[0]):
        f = features[fi]
        total1 = 0
        for t in range(m):
            vals[t] = X[idx[start + t], f]
            labs[t] = y[idx[start + t]]
            total1 += labs[t]
        order = np.argsort(vals, kind="mergesort")
        left_n = 0
        left1 = 0
        for t in range(m - 1):
            o = order[t]
            left_n += 1
            left1 += labs[o]
            v = vals[o]
            v_next = vals[order[t + 1]]
            if v == v_next:
                continue
            right_n = m - left_n
            if left_n < min_leaf or right_n < min_leaf:
                continue
            right1 = total1 - left1
            pl = left1 / left_n
            pr = right1 / right_n
            gl = 1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)
            gr = 1.0 - pr * pr - (1.0 - pr) * (1.0 - pr)
            imp = (left_n * gl + right_n * gr) / m
            if imp < best_imp:
                best_imp = imp
                best_f = f
                thr = (v + v_next) / 2.0
                if thr == v_next:
                    thr = v
                best_thr = thr
    return best_f, best_thr, best_imp


@njit(cache=True)
def grow_tree(X, y, seed, mtry, min_leaf, max_depth):
    """Grow one tree on a bootstrap sample; ``max_depth <= 0`` means unlimited.

    Returns flat node arrays (children index -1 marks a leaf), per-node class
    counts and the bootstrap indices.
    """
    n, p = X.shape
    state = np.empty(1, np.uint64)
    state[0] = seed
    idx = draw_bootstrap(state, n)

    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, 2), np.int64)

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    sp = 1
    n_nodes = 1

    feats = np.arange(p)
    tmp = np.empty(n, np.int64)
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        s = st_start[sp]
        e = st_end[sp]
        depth = st_depth[sp]

        c1 = 0
        for t in range(s, e):
            c1 += y[idx[t]]
        c0 = (e - s) - c1
        counts[node, 0] = c0
        counts[node, 1] = c1
        if c0 == 0 or c1 == 0 or (e - s) < 2 * min_leaf:
            continue
        if max_depth > 0 and depth >= max_depth:
            continue

        for i in range(p):
            feats[i] = i
        for i in range(mtry):
            j = i + _below(state, p - i)
            a = feats[i]
            feats[i] = feats[j]
            feats[j] = a
        f, thr, _ = best_split(X, y, idx, s, e, feats[:mtry], min_leaf)
        if f < 0:
            continue

        nl = 0
        nr = 0
        for t in range(s, e):
            if X[idx[t], f] <= thr:
                tmp[nl] = idx[t]
                nl += 1
        for t in range(s, e):
            if X[idx[t], f] > thr:
                tmp[nl + nr] = idx[t]
                nr += 1
        for t in range(nl + nr):
            idx[s + t] = tmp[t]

        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1

        st_node[sp] = n_nodes + 1
        st_start[sp] = s + nl
        st_end[sp] = e
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = n_nodes
        st_start[sp] = s
        st_end[sp] = s + nl
        st_depth[sp] = depth + 1
        sp += 1
        n_nodes += 2

    boot = bootstrap_indices(seed, n)
    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        boot,
    )


@njit(cache=True)
def tree_leaves(feature, threshold, left, right, X):
    """Leaf index reached by each row of ``X``."""
    out = np.empty(X.shape[0], np.int64)
    for r in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out
