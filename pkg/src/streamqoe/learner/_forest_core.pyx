# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CART regression-tree kernels.

Mirrors ``_forest_py`` operation for operation: same node order (preorder,
left first), same splitmix64 feature draws, same tie order when sorting
(value, then position in the node), same left-to-right summation. The two
backends therefore build bit-identical trees.
"""

import numpy as np
cimport numpy as cnp

from libc.stdint cimport int64_t, uint64_t
from libcpp.algorithm cimport sort
from libcpp.pair cimport pair
from libcpp.vector cimport vector

cnp.import_array()

cdef double INF = float("inf")


cdef inline uint64_t _splitmix_next(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Pending:
    Py_ssize_t start
    Py_ssize_t end
    int64_t depth
    int64_t parent
    bint is_left


def build_tree(const double[:, ::1] X, const double[::1] y, samples,
               int64_t max_depth, Py_ssize_t min_samples_leaf, Py_ssize_t n_candidates,
               uint64_t rng_state):
    """Grow one tree on ``samples`` (row indices, duplicates allowed).

    Returns ``(feature, threshold, left, right, value, n_samples)`` arrays;
    ``feature == -1`` marks a leaf.
    """
    cdef Py_ssize_t n_features = X.shape[1]
    cdef int64_t[::1] work = np.array(samples, dtype=np.int64, copy=True)
    cdef Py_ssize_t n_total = work.shape[0]
    cdef int64_t[::1] scratch = np.empty(max(n_total, 1), dtype=np.int64)

    cdef vector[int64_t] feature, left, right, count
    cdef vector[double] threshold, value
    cdef vector[Pending] stack
    cdef vector[pair[double, Py_ssize_t]] pairs
    cdef vector[double] ys
    cdef vector[Py_ssize_t] perm
    cdef vector[Py_ssize_t] cands

    cdef Pending item, child
    cdef Py_ssize_t node, m, k, i, j, r, f, ci, nleft, nright, best_i
    cdef int64_t best_f
    cdef double s, y0, total, total_sq, sl, ql, sr, qr, nl, nr, sse, best_sse
    cdef double best_a, best_b, thr, yk
    cdef bint pure
    cdef uint64_t state = rng_state

    perm.resize(n_features)
    cands.resize(n_candidates)
    pairs.resize(n_total)
    ys.resize(n_total)

    item.start = 0
    item.end = n_total
    item.depth = 0
    item.parent = -1
    item.is_left = False
    stack.push_back(item)

    while not stack.empty():
        item = stack.back()
        stack.pop_back()
        node = feature.size()
        feature.push_back(-1)
        threshold.push_back(0.0)
        left.push_back(-1)
        right.push_back(-1)
        m = item.end - item.start
        count.push_back(m)
        if item.parent >= 0:
            if item.is_left:
                left[item.parent] = node
            else:
                right[item.parent] = node

        y0 = y[work[item.start]]
        pure = True
        for k in range(item.start + 1, item.end):
            if y[work[k]] != y0:
                pure = False
                break
        if pure:
            value.push_back(y0)  # exact, no rounding from the mean
        else:
            s = 0.0
            for k in range(item.start, item.end):
                s += y[work[k]]
            value.push_back(s / m)
        if item.depth >= max_depth or m < 2 * min_samples_leaf or pure:
            continue

        # partial Fisher-Yates over feature ids, then ascending order
        for j in range(n_features):
            perm[j] = j
        for j in range(n_candidates):
            r = <Py_ssize_t>(_splitmix_next(&state) % <uint64_t>(n_features - j))
            i = j + r
            perm[j], perm[i] = perm[i], perm[j]
        for j in range(n_candidates):
            cands[j] = perm[j]
        sort(cands.begin(), cands.end())

        best_sse = INF
        best_f = -1
        best_a = 0.0
        best_b = 0.0
        for ci in range(n_candidates):
            f = cands[ci]
            for k in range(m):
                pairs[k].first = X[work[item.start + k], f]
                pairs[k].second = k
            sort(pairs.begin(), pairs.begin() + m)
            total = 0.0
            total_sq = 0.0
            for k in range(m):
                yk = y[work[item.start + pairs[k].second]]
                ys[k] = yk
                total += yk
                total_sq += yk * yk
            sl = 0.0
            ql = 0.0
            for i in range(m - 1):
                sl += ys[i]
                ql += ys[i] * ys[i]
                if pairs[i].first < pairs[i + 1].first and i + 1 >= min_samples_leaf \
                        and m - i - 1 >= min_samples_leaf:
                    nl = <double>(i + 1)
                    nr = <double>(m - i - 1)
                    sr = total - sl
                    qr = total_sq - ql
                    sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
                    if sse < best_sse:
                        best_sse = sse
                        best_f = f
                        best_a = pairs[i].first
                        best_b = pairs[i + 1].first
        if best_f < 0:
            continue

        thr = 0.5 * (best_a + best_b)
        if not thr < best_b:
            thr = best_a
        feature[node] = best_f
        threshold[node] = thr

        nleft = 0
        nright = 0
        for k in range(item.start, item.end):
            if X[work[k], best_f] <= thr:
                work[item.start + nleft] = work[k]
                nleft += 1
            else:
                scratch[nright] = work[k]
                nright += 1
        for k in range(nright):
            work[item.start + nleft + k] = scratch[k]

        child.depth = item.depth + 1
        child.parent = node
        child.start = item.start + nleft
        child.end = item.end
        child.is_left = False
        stack.push_back(child)
        child.start = item.start
        child.end = item.start + nleft
        child.is_left = True
        stack.push_back(child)

    n_nodes = feature.size()
    out_feature = np.empty(n_nodes, dtype=np.int64)
    out_threshold = np.empty(n_nodes, dtype=np.float64)
    out_left = np.empty(n_nodes, dtype=np.int64)
    out_right = np.empty(n_nodes, dtype=np.int64)
    out_value = np.empty(n_nodes, dtype=np.float64)
    out_count = np.empty(n_nodes, dtype=np.int64)
    cdef int64_t[::1] of = out_feature, ol = out_left, orr = out_right, oc = out_count
    cdef double[::1] ot = out_threshold, ov = out_value
    for k in range(<Py_ssize_t>n_nodes):
        of[k] = feature[k]
        ot[k] = threshold[k]
        ol[k] = left[k]
        orr[k] = right[k]
        ov[k] = value[k]
        oc[k] = count[k]
    return out_feature, out_threshold, out_left, out_right, out_value, out_count


def predict_tree(const double[:, ::1] X, const int64_t[::1] feature, const double[::1] threshold,
                 const int64_t[::1] left, const int64_t[::1] right, const double[::1] value):
    cdef Py_ssize_t n = X.shape[0], r
    cdef int64_t node
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            node = 0
            while feature[node] >= 0:
                if X[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            o[r] = value[node]
    return out
