# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: split search for tree growing and edit distance.

Kept in lockstep with dysec._kernels_py: same candidate set, same operation
order, same first-maximum tie rule, so both backends choose bit-identical
splits.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"


def best_split_classification(values, labels):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] y_arr, order
    cdef Py_ssize_t n = values.shape[0]
    if n < 2:
        return False, 0.0, float("-inf")
    order = np.argsort(values).astype(np.int64, copy=False)
    v_arr = np.ascontiguousarray(values, dtype=np.float64)[order]
    y_arr = np.ascontiguousarray(labels, dtype=np.int64)[order]

    cdef double[::1] v = v_arr
    cdef long long[::1] y = y_arr
    cdef long long total_pos = 0
    cdef Py_ssize_t i
    for i in range(n):
        total_pos += y[i]

    cdef double best_score = -np.inf
    cdef Py_ssize_t best_i = -1
    cdef long long pl = 0, ql, pr, qr, nl, nr
    cdef long long num_l, num_r
    cdef double score
    for i in range(n - 1):
        pl += y[i]
        if v[i] == v[i + 1]:
            continue
        nl = i + 1
        nr = n - nl
        ql = nl - pl
        pr = total_pos - pl
        qr = nr - pr
        num_l = pl * pl + ql * ql
        num_r = pr * pr + qr * qr
        score = (<double> num_l) / (<double> nl) + (<double> num_r) / (<double> nr)
        if score > best_score:
            best_score = score
            best_i = i
    if best_i < 0:
        return False, 0.0, float("-inf")
    # Adjacent floats can round the midpoint up to the right value, which
    # would send every sample left; the left value splits the scored
    # partition exactly.
    cdef double threshold = (v[best_i] + v[best_i + 1]) / 2.0
    if threshold >= v[best_i + 1]:
        threshold = v[best_i]
    return True, threshold, best_score


def best_split_regression(values, targets):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_arr, t_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order
    cdef Py_ssize_t n = values.shape[0]
    if n < 2:
        return False, 0.0, float("-inf")
    order = np.argsort(values).astype(np.int64, copy=False)
    v_arr = np.ascontiguousarray(values, dtype=np.float64)[order]
    t_arr = np.ascontiguousarray(targets, dtype=np.float64)[order]

    cdef double[::1] v = v_arr
    cdef double[::1] t = t_arr
    cdef double total = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        total += t[i]

    cdef double best_score = -np.inf
    cdef Py_ssize_t best_i = -1
    cdef double sl = 0.0, sr, score
    cdef long long nl, nr
    for i in range(n - 1):
        sl += t[i]
        if v[i] == v[i + 1]:
            continue
        nl = i + 1
        nr = n - nl
        sr = total - sl
        score = (sl * sl) / (<double> nl) + (sr * sr) / (<double> nr)
        if score > best_score:
            best_score = score
            best_i = i
    if best_i < 0:
        return False, 0.0, float("-inf")
    cdef double threshold = (v[best_i] + v[best_i + 1]) / 2.0
    if threshold >= v[best_i + 1]:
        threshold = v[best_i]
    return True, threshold, best_score


def levenshtein(str a, str b):
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if len(b) == 0:
        return len(a)

    cdef cnp.ndarray[cnp.uint32_t, ndim=1] ca = np.frombuffer(
        a.encode("utf-32-le"), dtype=np.uint32
    )
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] cb = np.frombuffer(
        b.encode("utf-32-le"), dtype=np.uint32
    )
    cdef Py_ssize_t la = ca.shape[0], lb = cb.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] prev_arr = np.arange(lb + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] curr_arr = np.empty(lb + 1, dtype=np.int64)
    cdef long long[::1] prev = prev_arr
    cdef long long[::1] curr = curr_arr
    cdef long long[::1] tmp
    cdef Py_ssize_t i, j
    cdef long long cost, best
    for i in range(la):
        curr[0] = i + 1
        for j in range(lb):
            cost = prev[j] + (ca[i] != cb[j])
            best = prev[j + 1] + 1
            if curr[j] + 1 < best:
                best = curr[j] + 1
            if cost < best:
                best = cost
            curr[j + 1] = best
        tmp = prev
        prev = curr
        curr = tmp
    return int(prev[lb])
