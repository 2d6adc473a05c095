# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels: LCS dynamic program and incremental
clipped n-gram overlap used by the oracle's gain evaluation."""

import numpy as np

cimport numpy as cnp


def lcs_length(cnp.int32_t[::1] a, cnp.int32_t[::1] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = b.shape[0]
    if m == 0 or n == 0:
        return 0
    cdef cnp.ndarray[cnp.int32_t, ndim=1] prev_arr = np.zeros(n + 1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] curr_arr = np.zeros(n + 1, dtype=np.int32)
    cdef cnp.int32_t[::1] prev = prev_arr
    cdef cnp.int32_t[::1] curr = curr_arr
    cdef cnp.int32_t[::1] tmp
    cdef Py_ssize_t i, j
    cdef cnp.int32_t ai, pj, cj
    for i in range(m):
        ai = a[i]
        for j in range(n):
            if ai == b[j]:
                curr[j + 1] = prev[j] + 1
            else:
                pj = prev[j + 1]
                cj = curr[j]
                curr[j + 1] = pj if pj >= cj else cj
        tmp = prev
        prev = curr
        curr = tmp
    return int(prev[n])


def clipped_overlap_apply(cnp.int32_t[::1] ids, cnp.int32_t[::1] cur,
                          cnp.int32_t[::1] ref):
    cdef Py_ssize_t k
    cdef cnp.int32_t i
    cdef long delta = 0
    for k in range(ids.shape[0]):
        i = ids[k]
        if cur[i] < ref[i]:
            delta += 1
        cur[i] += 1
    return delta


def clipped_overlap_peek(cnp.int32_t[::1] ids, cnp.int32_t[::1] cur,
                         cnp.int32_t[::1] ref):
    cdef Py_ssize_t k
    cdef cnp.int32_t i
    cdef long delta = 0
    for k in range(ids.shape[0]):
        i = ids[k]
        if cur[i] < ref[i]:
            delta += 1
        cur[i] += 1
    for k in range(ids.shape[0]):
        cur[ids[k]] -= 1
    return delta
