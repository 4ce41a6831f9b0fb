"""Pure-Python/numpy implementations of the hot kernels.

Mirror of the compiled module ``dysec._kernels``; both backends must pick the
same split (bit-identical threshold and score) for any input, so the arithmetic
below is written in the exact operation order the compiled loop uses.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "python"


def best_split_classification(values: np.ndarray, labels: np.ndarray):
    """Best binary split of one feature column under Gini impurity.

    Returns ``(valid, threshold, score)`` where score is
    ``sum_side (pos^2 + neg^2) / n_side``, to be maximized; minimizing the
    weighted child Gini is equivalent.  Candidate thresholds are midpoints
    between consecutive distinct sorted values; the first maximum wins.
    """
    n = values.shape[0]
    if n < 2:
        return False, 0.0, float("-inf")
    order = np.argsort(values)
    v = values[order]
    y = labels[order]
    boundaries = np.nonzero(v[:-1] != v[1:])[0]
    if boundaries.size == 0:
        return False, 0.0, float("-inf")
    pos_prefix = np.cumsum(y)
    total_pos = pos_prefix[-1]
    nl = boundaries + 1
    pl = pos_prefix[boundaries]
    ql = nl - pl
    nr = n - nl
    pr = total_pos - pl
    qr = nr - pr
    score = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr
    best = int(np.argmax(score))
    i = int(boundaries[best])
    threshold = (v[i] + v[i + 1]) / 2.0
    # Adjacent floats can round the midpoint up to the right value, which
    # would send every sample left; the left value splits the scored
    # partition exactly.
    if threshold >= v[i + 1]:
        threshold = v[i]
    return True, float(threshold), float(score[best])


def best_split_regression(values: np.ndarray, targets: np.ndarray):
    """Best binary split of one feature column under squared-error reduction.

    Score is ``sum_l^2/n_l + sum_r^2/n_r`` (maximized); subtracting the parent
    term turns it into the exact SSE decrease.
    """
    n = values.shape[0]
    if n < 2:
        return False, 0.0, float("-inf")
    order = np.argsort(values)
    v = values[order]
    t = targets[order]
    boundaries = np.nonzero(v[:-1] != v[1:])[0]
    if boundaries.size == 0:
        return False, 0.0, float("-inf")
    prefix = np.cumsum(t)
    total = prefix[-1]
    sl = prefix[boundaries]
    sr = total - sl
    nl = boundaries + 1
    nr = n - nl
    score = (sl * sl) / nl + (sr * sr) / nr
    best = int(np.argmax(score))
    i = int(boundaries[best])
    threshold = (v[i] + v[i + 1]) / 2.0
    if threshold >= v[i + 1]:
        threshold = v[i]
    return True, float(threshold), float(score[best])


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute), classic two-row DP."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a):
        curr = [i + 1]
        for j, cb in enumerate(b):
            curr.append(min(prev[j + 1] + 1, curr[j] + 1, prev[j] + (ca != cb)))
        prev = curr
    return prev[-1]
