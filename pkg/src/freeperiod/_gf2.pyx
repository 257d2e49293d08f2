# cython: language_level=3, boundscheck=False, wraparound=False
# distutils: language = c++
"""Compiled GF(2) column reduction for sparse boundary matrices (CSC input)."""
from libcpp.vector cimport vector
import numpy as np
cimport numpy as cnp


cdef void _xor_into(vector[long long]& dst, const vector[long long]& src):
    # symmetric difference of two ascending index lists
    cdef vector[long long] out
    cdef size_t i = 0, j = 0
    out.reserve(dst.size() + src.size())
    while i < dst.size() and j < src.size():
        if dst[i] < src[j]:
            out.push_back(dst[i]); i += 1
        elif dst[i] > src[j]:
            out.push_back(src[j]); j += 1
        else:
            i += 1; j += 1
    while i < dst.size():
        out.push_back(dst[i]); i += 1
    while j < src.size():
        out.push_back(src[j]); j += 1
    dst.swap(out)


def gf2_rank(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices, long long n_rows):
    """Rank over GF(2); each column's row indices must be sorted ascending."""
    cdef Py_ssize_t n_cols = indptr.shape[0] - 1
    cdef vector[vector[long long]] cols
    cdef vector[long long] pivot_of_row
    cdef Py_ssize_t c, k
    cdef long long low, p
    cdef long long rank = 0
    cols.resize(n_cols)
    pivot_of_row.assign(n_rows, -1)
    for c in range(n_cols):
        for k in range(indptr[c], indptr[c + 1]):
            cols[c].push_back(indices[k])
        while cols[c].size() > 0:
            low = cols[c].back()
            p = pivot_of_row[low]
            if p < 0:
                pivot_of_row[low] = c
                rank += 1
                break
            _xor_into(cols[c], cols[p])
    return rank
