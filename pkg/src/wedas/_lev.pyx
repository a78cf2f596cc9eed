# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Levenshtein kernel (two-row Wagner-Fischer over code points)."""
from libc.stdlib cimport malloc, free


def levenshtein(str a, str b):
    """Unit-cost edit distance between two strings."""
    cdef Py_ssize_t n = len(a)
    cdef Py_ssize_t m = len(b)
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t i, j
    cdef Py_ssize_t diag, up, best
    cdef Py_ssize_t *row
    cdef Py_UCS4 *bb
    cdef Py_UCS4 ca

    while lo < n and lo < m and a[lo] == b[lo]:
        lo += 1
    while n > lo and m > lo and a[n - 1] == b[m - 1]:
        n -= 1
        m -= 1
    if n - lo < m - lo:
        a, b = b, a
        n, m = m, n
    n -= lo
    m -= lo
    if m == 0:
        return n

    row = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    bb = <Py_UCS4 *> malloc(m * sizeof(Py_UCS4))
    if row == NULL or bb == NULL:
        free(row)
        free(bb)
        raise MemoryError()
    try:
        for j in range(m):
            bb[j] = b[lo + j]
        for j in range(m + 1):
            row[j] = j
        for i in range(1, n + 1):
            ca = a[lo + i - 1]
            diag = row[0]
            row[0] = i
            for j in range(1, m + 1):
                up = row[j]
                if bb[j - 1] == ca:
                    best = diag
                else:
                    best = diag + 1
                    if up + 1 < best:
                        best = up + 1
                    if row[j - 1] + 1 < best:
                        best = row[j - 1] + 1
                row[j] = best
                diag = up
        return row[m]
    finally:
        free(row)
        free(bb)
