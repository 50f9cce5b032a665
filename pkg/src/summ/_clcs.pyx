# cython: language_level=3
"""Compiled longest-common-subsequence kernel.

This is the hot inner loop behind every ROUGE-L call (proxy labelling
scans every document sentence against every summary sentence, and the
reinforcement rewards call it once per extraction step).  Token strings
are interned to integer ids by the caller; here we only run the O(m*n)
dynamic program over two int arrays.
"""

import numpy as np

cimport numpy as cnp


def lcs_length(cnp.int64_t[::1] a, cnp.int64_t[::1] b):
    """Length of the longest common subsequence of two id sequences."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = b.shape[0]
    if m == 0 or n == 0:
        return 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] row_arr = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] row = row_arr
    cdef Py_ssize_t i, j
    cdef cnp.int64_t above, diag, val
    for i in range(m):
        diag = 0
        for j in range(n):
            above = row[j + 1]
            if a[i] == b[j]:
                val = diag + 1
            else:
                val = above if above >= row[j] else row[j]
            row[j + 1] = val
            diag = above
    return int(row[n])
