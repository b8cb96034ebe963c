"""Pure numpy tree kernels, used when the compiled extension is unavailable.

Kept in lockstep with ``_forest_core.pyx``; see that module's docstring
for the ordering rules both must follow.
"""

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, state):
        self.state = int(state) & _MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)


def draw_features(rng, n_features, k):
    perm = list(range(n_features))
    for j in range(k):
        i = j + rng.next() % (n_features - j)
        perm[j], perm[i] = perm[i], perm[j]
    return sorted(perm[:k])


def _best_split(x_node, y_node, min_samples_leaf):
    """Lowest-SSE cut for one feature: (sse, left value, right value) or None."""
    m = x_node.shape[0]
    order = np.argsort(x_node, kind="stable")
    xs = x_node[order]
    ys = y_node[order]
    cs = np.cumsum(ys)
    cq = np.cumsum(ys * ys)
    nl = np.arange(1, m, dtype=np.float64)
    nr = m - nl
    sl = cs[:-1]
    ql = cq[:-1]
    sr = cs[-1] - sl
    qr = cq[-1] - ql
    sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
    valid = (xs[:-1] < xs[1:]) & (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    i = int(np.argmin(sse))
    return float(sse[i]), float(xs[i]), float(xs[i + 1])


def build_tree(X, y, samples, max_depth, min_samples_leaf, n_candidates, rng_state):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n_features = X.shape[1]
    rng = SplitMix64(rng_state)
    feature, threshold, left, right, value, count = [], [], [], [], [], []
    stack = [(np.asarray(samples, dtype=np.int64), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        node = len(feature)
        m = idx.shape[0]
        y_node = y[idx]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        pure = bool(np.all(y_node == y_node[0]))
        value.append(float(y_node[0]) if pure else float(np.cumsum(y_node)[-1] / m))
        count.append(m)
        if parent >= 0:
            (left if is_left else right)[parent] = node

        if depth >= max_depth or m < 2 * min_samples_leaf or pure:
            continue

        best = (np.inf, -1, 0.0, 0.0)
        for f in draw_features(rng, n_features, n_candidates):
            found = _best_split(X[idx, f], y_node, min_samples_leaf)
            if found is not None and found[0] < best[0]:
                best = (found[0], f, found[1], found[2])
        _, best_f, a, b = best
        if best_f < 0:
            continue
        thr = 0.5 * (a + b)
        if not thr < b:
            thr = a
        feature[node] = best_f
        threshold[node] = thr
        goes_left = X[idx, best_f] <= thr
        stack.append((idx[~goes_left], depth + 1, node, False))
        stack.append((idx[goes_left], depth + 1, node, True))

    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value, dtype=np.float64), np.array(count, dtype=np.int64))


def predict_tree(X, feature, threshold, left, right, value):
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] >= 0
    rows = np.arange(X.shape[0])
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node].astype(np.float64)
